"""
Configuration Module
Run configuration loading, overrides and validation
"""
