"""Linear MMSE estimation (module A): likelihood plus pseudo-Gaussian prior.

The posterior mean and variance are

    x_post = x_pri + v A^T (v A A^T + d0^2 I)^-1 (y - A x_pri)
    v_post = v - (v^2 / N) tr(A^T (v A A^T + d0^2 I)^-1 A)

with the trace always computed spectrally as sum_i s_i^2 / (v s_i^2 + d0^2)
from the cached gram spectrum.  The mean computation picks a backend by
operator kind: a scalar diagonal inverse for partial-orthogonal operators
(A A^T = I), the stored factors for SvdOperator, and a direct M x M solve
for dense matrices.
"""

from __future__ import annotations

import numpy as np

from .linops import DenseOperator, LinearOperator, PartialOrthogonalOperator, SvdOperator
from .messages import GaussianMessage

# Floor on the measurement-noise variance: the (v A A^T + d0^2 I) inverse
# degenerates at d0^2 = 0 when A A^T is rank deficient.
NOISE_VAR_FLOOR = 1e-12


class LmmseProblem:
    """Immutable bundle of operator, measurements, and noise variance."""

    def __init__(self, operator: LinearOperator, y, noise_var: float):
        y = np.asarray(y, dtype=np.float64)
        m, n = operator.shape
        if y.ndim != 1 or y.shape[0] != m:
            raise ValueError(f"y must have length M={m}, got shape {y.shape}")
        if not np.isfinite(y).all():
            raise ValueError("measurements must be finite")
        if noise_var < 0:
            raise ValueError(f"noise variance must be nonnegative, got {noise_var}")
        self.operator = operator
        self.y = y
        self.noise_var = max(float(noise_var), NOISE_VAR_FLOOR)
        # spectrum cached once; every later posterior call is O(min(M, N))
        self._s2 = operator.gram_spectrum()
        self._gram = None
        if isinstance(operator, DenseOperator):
            a = operator.to_dense()
            self._gram = a @ a.T

    @property
    def shape(self) -> tuple[int, int]:
        return self.operator.shape

    def posterior_variance(self, v_pri: float) -> float:
        return spectral_posterior_variance(self._s2, self.shape[1], v_pri, self.noise_var)

    def _solve_gram(self, v: float, resid: np.ndarray) -> np.ndarray:
        """(v A A^T + d0^2 I)^-1 resid for whichever backend applies."""
        op = self.operator
        d2 = self.noise_var
        if isinstance(op, PartialOrthogonalOperator):
            return resid / (v + d2)
        if isinstance(op, SvdOperator):
            m = self.shape[0]
            z = op._u.T @ resid
            scale = np.full(m, 1.0 / d2)
            k = op._s.size
            scale[:k] = 1.0 / (v * op._s**2 + d2)
            return op._u @ (scale * z)
        if self._gram is not None:
            m = self.shape[0]
            return np.linalg.solve(v * self._gram + d2 * np.eye(m), resid)
        raise TypeError(f"no LMMSE backend for operator type {type(op).__name__}")


def spectral_posterior_variance(s2: np.ndarray, n: int, v_pri: float, noise_var: float) -> float:
    """v - (v^2/N) sum_i s_i^2 / (v s_i^2 + d0^2); zero singular values drop out."""
    trace = np.sum(s2 / (v_pri * s2 + noise_var))
    return float(v_pri - (v_pri * v_pri / n) * trace)


def lmmse_posterior(problem: LmmseProblem, pri: GaussianMessage) -> GaussianMessage:
    """Posterior message of module A given the pseudo-prior message."""
    m, n = problem.shape
    if pri.dim != n:
        raise ValueError(f"prior mean must have length N={n}, got {pri.dim}")
    v = pri.variance
    op = problem.operator
    resid = problem.y - op.apply(pri.mean)
    mean = pri.mean + v * op.apply_adjoint(problem._solve_gram(v, resid))
    var = problem.posterior_variance(v)
    if not (np.isfinite(mean).all() and np.isfinite(var)):
        raise RuntimeError(
            f"non-finite LMMSE result (v_pri={v:.3e}, noise_var={problem.noise_var:.3e})"
        )
    return GaussianMessage(mean, var)


def lmmse_exact_joint(problem: LmmseProblem, prior_mean, prior_var: float):
    """Exact joint Gaussian posterior (mean, covariance) under N(prior_mean, prior_var I).

    Forms (A^T A / d0^2 + I / tau^2)^-1 densely.  Test/oracle use only; the
    iterative path never materializes N x N matrices.
    """
    m, n = problem.shape
    prior_mean = np.asarray(prior_mean, dtype=np.float64)
    if prior_mean.shape != (n,):
        raise ValueError(f"prior mean must have length N={n}, got {prior_mean.shape}")
    if prior_var <= 0:
        raise ValueError("prior variance must be positive")
    a = problem.operator.to_dense()
    d2 = problem.noise_var
    precision = a.T @ a / d2 + np.eye(n) / prior_var
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (a.T @ problem.y / d2 + prior_mean / prior_var)
    return mean, cov
