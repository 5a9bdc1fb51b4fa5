"""Scikit-learn estimator wrapping the stats-and-search pipeline.

NeuronPlacer treats a binary activation matrix (tokens as samples, neurons
as features) as training data: fit learns co-activation statistics and a
placement, transform reorders the feature columns into flash order so that
co-activated columns end up adjacent. This makes the layout step compose
with sklearn pipelines and grid search; the rest of the toolkit consumes
the fitted placement_ directly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .placement import Placement, greedy_search
from .stats import extract_stats
from .trace import LayerTrace


class NeuronPlacer(TransformerMixin, BaseEstimator):
    """Learn a co-activation-aware neuron ordering from activation samples.

    Parameters
    ----------
    activation_threshold : float, default=0.0
        A matrix entry strictly greater than this counts as activated,
        which lets raw activation magnitudes serve as input directly.

    Attributes
    ----------
    stats_ : CoActivationStats
        Exact single and pairwise activation counts from fit.
    placement_ : Placement
        The learned neuron ordering.
    order_ : ndarray of shape (n_features,)
        placement_.order; column p of transform output is input column order_[p].
    n_features_in_ : int
    """

    def __init__(self, activation_threshold: float = 0.0):
        self.activation_threshold = activation_threshold

    def _to_trace(self, X: np.ndarray) -> LayerTrace:
        active = X > self.activation_threshold
        tokens = tuple(
            np.flatnonzero(row).astype(np.int32) for row in active
        )
        return LayerTrace(
            layer_id=0, neuron_count=X.shape[1], bundle_width=2, tokens=tokens
        )

    def fit(self, X, y=None):
        """Count co-activations over the samples and search a placement."""
        X = check_array(X, accept_sparse=False, ensure_2d=True)
        self.n_features_in_ = X.shape[1]
        self.stats_ = extract_stats(self._to_trace(X))
        self.placement_ = greedy_search(self.stats_)
        self.order_ = self.placement_.order
        return self

    def transform(self, X):
        """Reorder columns into flash order (co-activated columns adjacent)."""
        check_is_fitted(self, "order_")
        X = check_array(X, accept_sparse=False, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X[:, self.order_]

    def inverse_transform(self, X):
        """Undo transform: put columns back into neuron-id order."""
        check_is_fitted(self, "order_")
        X = check_array(X, accept_sparse=False, ensure_2d=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X[:, self.placement_.inverse]

    def fit_trace(self, trace: LayerTrace):
        """Fit from a LayerTrace instead of a matrix; same learned attributes."""
        self.n_features_in_ = trace.neuron_count
        self.stats_ = extract_stats(trace)
        self.placement_ = greedy_search(self.stats_)
        self.order_ = self.placement_.order
        return self
