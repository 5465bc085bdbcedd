"""Theta-almost twisted Poisson structures, prequantization and polarizations."""
