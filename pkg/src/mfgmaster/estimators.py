"""scikit-learn style wrappers around the MFG and master-field solvers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .master import evaluate_master, flat_derivative_field
from .mfg import solve_mfg
from .model import MfgModel


class MfgSolver(BaseEstimator):
    """Solve the MFG system from an initial measure.

    ``fit(m0)`` stores ``u_``, ``m_``, ``n_iter_`` and ``gap_history_``.
    """

    def __init__(self, model: MfgModel | None = None, theta: float = 0.5, tol: float = 1e-8,
                 max_iter: int = 200, initial: str = "constant"):
        self.model = model
        self.theta = theta
        self.tol = tol
        self.max_iter = max_iter
        self.initial = initial

    def fit(self, m0, y=None):
        if self.model is None:
            raise ValueError("MfgSolver needs a model")
        sol = solve_mfg(self.model, np.asarray(m0, dtype=float), theta=self.theta,
                        tol=self.tol, max_iter=self.max_iter, initial=self.initial)
        self.solution_ = sol
        self.u_, self.m_ = sol.u, sol.m
        self.n_iter_ = sol.iterations
        self.gap_history_ = sol.gap_history
        return self

    def predict(self, X=None):
        """Value function at the initial time."""
        check_is_fitted(self, "u_")
        return self.u_[0]


class MasterFieldTransformer(TransformerMixin, BaseEstimator):
    """Map each row (a grid measure) to ``U(t0, ., m)``.

    With ``derivative=True`` the rows are mapped to the flattened normalized
    kernel ``dU/dm`` instead.
    """

    def __init__(self, model: MfgModel | None = None, t0: float | None = None,
                 tol: float = 1e-10, derivative: bool = False):
        self.model = model
        self.t0 = t0
        self.tol = tol
        self.derivative = derivative

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("MasterFieldTransformer needs a model")
        self.t0_ = self.model.grid.t0 if self.t0 is None else float(self.t0)
        self.n_features_in_ = self.model.grid.n_x
        return self

    def transform(self, X):
        if not hasattr(self, "t0_"):
            raise NotFittedError("call fit before transform")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} nodes per row, got {X.shape[1]}")
        rows = []
        for m0 in X:
            if self.derivative:
                rows.append(flat_derivative_field(self.model, self.t0_, m0, self.tol).K_normalized.ravel())
            else:
                rows.append(evaluate_master(self.model, self.t0_, m0, self.tol).U)
        return np.vstack(rows)
