"""Semi-supervised active learning toolkit for SVMs.

Structure capture via variational Bayesian mixture models, responsibility-
weighted Mahalanobis kernels, multi-criteria query selection, a pool-based
active learning engine, and the benchmark/evaluation harness around them.
"""

__version__ = "0.1.0"
