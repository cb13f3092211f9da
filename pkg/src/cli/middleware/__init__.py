"""
CLI middleware
"""
