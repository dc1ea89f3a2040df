"""
Test suite for Scene Arrange
"""
