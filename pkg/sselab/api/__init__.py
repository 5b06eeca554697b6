"""
Command-line surface and experiment presets
"""
