"""Lie-group propagation and piecewise-linear GRAPE for spin dynamics."""
