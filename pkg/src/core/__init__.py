"""
Core Module
Errors, logging setup and the component factory
"""
