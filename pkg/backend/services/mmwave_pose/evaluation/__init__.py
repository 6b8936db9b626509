"""Pose metrics, fold reports and statistical comparison of methods"""
