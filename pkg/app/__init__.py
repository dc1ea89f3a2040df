"""
Scene Arrange - Human-Object 3D Spatial Arrangement
"""

__version__ = "1.0.0"
__author__ = "Scene Arrange Team"
