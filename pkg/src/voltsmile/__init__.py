"""Two-factor NIG model for electricity futures options."""
