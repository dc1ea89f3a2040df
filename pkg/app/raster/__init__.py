"""
Silhouette and depth rendering plus 2D mask machinery.
"""
