"""Sequential empirical processes of multivariate long-range dependent Gaussian sequences."""

__version__ = "0.1.0"
