"""Tree-edit actions and the operator that applies them."""
