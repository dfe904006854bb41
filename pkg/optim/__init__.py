"""Optim package: DP-GD, DP-SGD, output-perturbation baselines and the reference optimiser."""
