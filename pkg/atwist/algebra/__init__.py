"""Scalar expressions and graded fields on a single chart."""
