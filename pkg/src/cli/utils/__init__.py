"""
CLI utilities
"""
