"""
Mesh, mask and library IO plus the procedural stand-in assets.
"""
