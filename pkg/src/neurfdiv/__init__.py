"""Neural estimation of f-divergences with bounded shallow networks."""
