"""
Af Analyzer - Test suite.
"""
