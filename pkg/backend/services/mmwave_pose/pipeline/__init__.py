"""Experiment configuration, logging setup, error mapping and the CLI runner"""
