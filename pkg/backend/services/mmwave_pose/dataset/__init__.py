"""Dataset containers, LOPO splits and batching"""
