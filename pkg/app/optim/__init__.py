"""Pose fitting, joint arrangement and scale learning."""
