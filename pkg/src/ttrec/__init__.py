"""Tensor-train least-squares regression from random point samples.

Subpackages by concern: ``tensor_core`` (TT data structure and
contractions), ``bases`` (univariate polynomial bases and Gramians),
``variation`` (variation-function calculus and the local rank-1 estimator),
``sparse_solver`` (weighted LASSO with cross-validation), ``recovery`` (the
ALS-family sweep algorithms), ``uq_bench`` (diffusion benchmark and
spectrum experiments), ``cli`` (command-line front end).
"""

__version__ = "0.1.0"
