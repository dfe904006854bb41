"""Curvature package: eigensolvers and curvature samples along training paths."""
