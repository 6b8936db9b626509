"""Optimiser, learning-rate schedules and the two-stage training loops"""
