"""
Services layer: pipeline stages, rendering, export and synthetic scenes.
"""
