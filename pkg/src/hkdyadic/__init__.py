"""Shifted dyadic grids, maximal operators and variable Lebesgue norms."""
