"""
Loss terms of the per-instance fit and the joint arrangement.
"""
