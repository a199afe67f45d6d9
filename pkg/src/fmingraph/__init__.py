"""Numerical laboratory for f-minimal graphs over rotationally symmetric model manifolds."""
