"""Scoring prompts against labelled datasets."""
