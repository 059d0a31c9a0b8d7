"""geoblend: spatiotemporal PM2.5 prediction toolkit.

Cleans low-cost-sensor data, fits geostatistical (universal kriging,
nearest-neighbor GP, fixed-rank kriging) and machine-learning (regression,
random forest, SVR, neural-network ensemble) predictors over four feature
groups, and benchmarks them with sensor-level five-fold cross-validation.
"""

__version__ = "0.1.0"
