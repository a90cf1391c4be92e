"""Morphing attack detection from a single face image."""
