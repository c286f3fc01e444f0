"""Fixed-length features from discrete temporal activity logs, with branch-visit
(top-5 regression bank) and up-sell (binary classification) learners."""

__version__ = "0.1.0"
