"""
Configuration management for Scene Arrange
"""
