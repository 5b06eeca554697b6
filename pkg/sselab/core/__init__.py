"""
Core package: settings, logging and the exception hierarchy
"""
