"""
Test suite for the omniview toolkit.
"""
