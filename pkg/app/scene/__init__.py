"""
Scene value objects, placement and config loading.
"""
