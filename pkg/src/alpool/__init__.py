"""Pool-based active learning toolkit.

Provides an asymmetric-cost linear SVM trained with SMO, a pool-based
active-learning loop that queries the instances closest to the current
hyperplane, a prediction-stability stopping rule, a cross-validated
benchmark harness, and an HTTP annotation service for live labeling.
"""

__version__ = "0.1.0"
