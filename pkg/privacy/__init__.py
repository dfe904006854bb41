"""Privacy package: Rényi-DP accounting and noise calibration."""
