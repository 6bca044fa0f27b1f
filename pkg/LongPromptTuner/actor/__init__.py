"""The actor turns critic feedback into edit actions and applies them to prompt trees."""
