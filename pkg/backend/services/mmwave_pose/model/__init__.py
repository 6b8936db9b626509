"""Masked-autoencoder video transformer, pose heads and checkpoints"""
