"""Learning-curve prediction from early epochs and dataset meta-features, plus
rank-consistent and Tree/DNN tiny-benchmark selection."""

__version__ = "0.1.0"
