"""scikit-learn style wrapper around one variational product formula."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ansatz import ProductAnsatz, assemble_unitary
from .engine import DEFAULT_ATOL, DEFAULT_RTOL, FULL, integrate_l1, integrate_l2, krylov_basis
from .models import HamiltonianSplit
from .operators import frobenius_error, matexp_hermitian
from .propagators import repeat_stroboscopic


def check_split(split) -> HamiltonianSplit:
    if not isinstance(split, HamiltonianSplit):
        raise TypeError(f"expected a HamiltonianSplit, got {type(split).__name__}")
    return split


def check_states(X, dim: int) -> np.ndarray:
    """2-D complex array of row states with matching dimension."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected states of shape (n_samples, {dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("states contain non-finite entries")
    return X


class VariationalPropagator(BaseEstimator, TransformerMixin):
    """Fit c(t) on [0, tau] for one ansatz, then act with the frozen step.

    ``fit`` takes a HamiltonianSplit in place of a design matrix; ``transform``
    evolves row-stacked states by ``n_steps`` frozen steps and ``predict``
    returns parameters at the requested times.
    """

    def __init__(
        self,
        pattern: str = "BAB",
        tau: float = 0.1,
        lagrangian: str = "l1",
        shared: bool = False,
        krylov_dim: int | None = None,
        n_steps: int = 1,
        n_grid: int = 21,
        rtol: float = DEFAULT_RTOL,
        atol: float = DEFAULT_ATOL,
    ):
        self.pattern = pattern
        self.tau = tau
        self.lagrangian = lagrangian
        self.shared = shared
        self.krylov_dim = krylov_dim
        self.n_steps = n_steps
        self.n_grid = n_grid
        self.rtol = rtol
        self.atol = atol

    def fit(self, X, y=None, psi0=None):
        split = check_split(X)
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lagrangian not in ("l1", "l2"):
            raise ValueError(f"lagrangian must be 'l1' or 'l2', got {self.lagrangian!r}")
        make = ProductAnsatz.palindromic if self.shared else ProductAnsatz.from_pattern
        ansatz = make(split, self.pattern)
        scope = FULL
        if self.krylov_dim is not None:
            if self.lagrangian != "l1":
                raise ValueError("Krylov scope is available for the first-order equations only")
            if psi0 is None:
                raise ValueError("krylov_dim needs an initial state psi0")
            scope = krylov_basis(split.H, psi0, self.krylov_dim)
        grid = np.linspace(0.0, self.tau, max(2, int(self.n_grid)))
        if self.lagrangian == "l1":
            traj = integrate_l1(ansatz, split.H, self.tau, grid, self.rtol, self.atol, scope)
        else:
            traj = integrate_l2(ansatz, split.H, self.tau, grid, self.rtol, self.atol, scope)
        self.split_ = split
        self.ansatz_ = ansatz
        self.trajectory_ = traj
        self.params_ = traj.final.copy()
        self.step_unitary_ = assemble_unitary(ansatz, self.params_)
        self.n_features_in_ = split.dim
        return self

    def predict(self, T) -> np.ndarray:
        """Parameters c(t) for each t in ``T`` (0 <= t <= tau)."""
        check_is_fitted(self, "trajectory_")
        T = np.atleast_1d(np.asarray(T, dtype=float))
        if np.any(T < 0) or np.any(T > self.tau + 1e-12):
            raise ValueError(f"times must lie in [0, {self.tau}]")
        return np.array([self.trajectory_(t) if t > 0 else np.zeros(self.ansatz_.n_params) for t in T])

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "step_unitary_")
        X = check_states(X, self.n_features_in_)
        U = np.linalg.matrix_power(self.step_unitary_, int(self.n_steps))
        return X @ U.T

    def unitary(self, t_total: float) -> np.ndarray:
        """Stroboscopic propagator U_step**floor(t_total / tau)."""
        check_is_fitted(self, "step_unitary_")
        return repeat_stroboscopic(self.step_unitary_, t_total, self.tau)[0]

    def score(self, X=None, y=None) -> float:
        """Negative Frobenius error of the frozen step against exp(-i H tau)."""
        check_is_fitted(self, "step_unitary_")
        return -frobenius_error(matexp_hermitian(self.split_.H, -self.tau), self.step_unitary_)
