"""
Geometry kernel: meshes, cameras, rotations and placement.
"""
