"""Dyadic and Fourier paraproduct calculus on finite grids."""
