"""Critic reflections on prompt trees and their aggregation into groups."""
