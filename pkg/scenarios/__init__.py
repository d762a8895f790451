"""
Built-in experiment scenarios.
"""
