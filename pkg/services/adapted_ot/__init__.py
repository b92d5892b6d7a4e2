"""
Adapted optimal transport toolkit package
"""
