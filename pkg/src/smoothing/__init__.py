"""Smoothing-transform fixed points: similarity groups, weights, branching and stable laws."""
