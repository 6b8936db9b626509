"""FMCW point-scatterer simulation of synthetic articulated figures"""
