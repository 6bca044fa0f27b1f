"""Prompt trees: parsing, path resolution and rendering."""
