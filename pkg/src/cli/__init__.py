"""
Command-line surface of the control lab
"""
