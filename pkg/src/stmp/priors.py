"""Analytic i.i.d. scalar Gaussian-mixture priors.

A GMM prior is rich enough to express spike-and-slab (Bernoulli-Gaussian)
signals while keeping every quantity the message-passing loop needs in
closed form: samples, first/second-order scores of the noise-perturbed
density, and the exact scalar MMSE posterior.  A brute-force quadrature
oracle is included to validate the closed forms independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

_LOG_2PI = float(np.log(2.0 * np.pi))


class QuadratureError(RuntimeError):
    """Quadrature refinement stopped above the requested error target."""


@dataclass(frozen=True)
class GmmPrior:
    """Scalar Gaussian mixture: weights on the simplex, per-component mean/variance.

    A zero component variance denotes a point mass, so Bernoulli-Gaussian
    priors are expressed as (1-rho) * delta_0 + rho * N(mean, var).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        mu = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        tau2 = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", tau2)
        if not (w.shape == mu.shape == tau2.shape) or w.size < 1:
            raise ValueError("weights, means, variances must share a nonempty shape")
        if (w <= 0).any():
            raise ValueError("all mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {w.sum()!r}")
        if (tau2 < 0).any():
            raise ValueError("component variances must be nonnegative")
        if not (np.isfinite(mu).all() and np.isfinite(tau2).all()):
            raise ValueError("component parameters must be finite")

    @classmethod
    def gaussian(cls, mean: float = 0.0, var: float = 1.0) -> "GmmPrior":
        return cls(np.array([1.0]), np.array([mean]), np.array([var]))

    @classmethod
    def bernoulli_gaussian(cls, rho: float, mean: float = 0.0, var: float = 1.0) -> "GmmPrior":
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {rho}")
        return cls(np.array([1.0 - rho, rho]), np.array([0.0, mean]), np.array([0.0, var]))

    @property
    def n_components(self) -> int:
        return self.weights.size

    def second_moment(self) -> float:
        """E[x^2] = sum_k w_k (mu_k^2 + tau_k^2)."""
        return float(np.sum(self.weights * (self.means**2 + self.variances)))

    def mean(self) -> float:
        return float(np.sum(self.weights * self.means))

    def rms(self) -> float:
        return float(np.sqrt(self.second_moment()))

    def sample(self, size, seed: int) -> np.ndarray:
        """i.i.d. draws, deterministic given ``seed`` (Philox stream)."""
        rng = np.random.Generator(np.random.Philox(seed))
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        if n < 1:
            raise ValueError(f"need at least one sample, got shape {shape}")
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        x = self.means[comp] + np.sqrt(self.variances[comp]) * rng.standard_normal(n)
        return x.reshape(shape)

    def to_dict(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights],
            "means": [float(v) for v in self.means],
            "variances": [float(v) for v in self.variances],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GmmPrior":
        return cls(
            np.asarray(d["weights"], dtype=np.float64),
            np.asarray(d["means"], dtype=np.float64),
            np.asarray(d["variances"], dtype=np.float64),
        )


class PerturbedGmm:
    """The prior observed through AWGN of variance sigma2.

    The perturbed density is itself a GMM with component variances
    tau_k^2 + sigma^2 > 0, so scores and the exact posterior are closed-form.
    All evaluations broadcast over array inputs coordinatewise.
    """

    def __init__(self, base: GmmPrior, sigma2: float):
        sigma2 = float(sigma2)
        if not sigma2 > 0.0:
            raise ValueError(f"perturbation variance must be positive, got {sigma2}")
        self.base = base
        self.sigma2 = sigma2
        self._c = base.variances + sigma2  # perturbed component variances
        self._log_w = np.log(base.weights)

    def _log_components(self, x):
        # shape (K,) + x.shape; log w_k + log N(x; mu_k, c_k)
        x = np.asarray(x, dtype=np.float64)
        diff = self.base.means.reshape((-1,) + (1,) * x.ndim) - x[None, ...]
        c = self._c.reshape((-1,) + (1,) * x.ndim)
        lw = self._log_w.reshape((-1,) + (1,) * x.ndim)
        return lw - 0.5 * (_LOG_2PI + np.log(c)) - 0.5 * diff * diff / c, diff, c

    def logpdf(self, x):
        log_comp, _, _ = self._log_components(x)
        out = logsumexp(log_comp, axis=0)
        return float(out) if np.isscalar(x) else out

    def score1(self, x):
        """d/dx log p(x): responsibility-weighted sum of (mu_k - x) / c_k."""
        log_comp, diff, c = self._log_components(x)
        r = np.exp(log_comp - logsumexp(log_comp, axis=0, keepdims=True))
        out = np.sum(r * diff / c, axis=0)
        return float(out) if np.isscalar(x) else out

    def score2(self, x):
        """d^2/dx^2 log p(x), always >= -1/sigma^2.

        Second responsibility moment of (mu_k - x)/c_k minus the squared
        first moment, minus the mean inverse variance.
        """
        log_comp, diff, c = self._log_components(x)
        r = np.exp(log_comp - logsumexp(log_comp, axis=0, keepdims=True))
        g = diff / c
        first = np.sum(r * g, axis=0)
        out = np.sum(r * g * g, axis=0) - first * first - np.sum(r / c, axis=0)
        return float(out) if np.isscalar(x) else out

    def posterior(self, x):
        """Exact scalar MMSE posterior mean and variance given observation x.

        Mixture of per-component conjugate posteriors with means
        (tau_k^2 x + sigma^2 mu_k) / c_k and variances tau_k^2 sigma^2 / c_k,
        combined by the responsibilities.
        """
        log_comp, _, c = self._log_components(x)
        r = np.exp(log_comp - logsumexp(log_comp, axis=0, keepdims=True))
        x = np.asarray(x, dtype=np.float64)
        tau2 = self.base.variances.reshape((-1,) + (1,) * x.ndim)
        mu = self.base.means.reshape((-1,) + (1,) * x.ndim)
        m_hat = (tau2 * x[None, ...] + self.sigma2 * mu) / c
        v_hat = tau2 * self.sigma2 / c
        mean = np.sum(r * m_hat, axis=0)
        var = np.sum(r * (v_hat + m_hat * m_hat), axis=0) - mean * mean
        if x.ndim == 0:
            return float(mean), float(var)
        return mean, var


def mmse_scalar_oracle(p: PerturbedGmm, x_tilde):
    """Closed-form posterior (mean, var) of x given x_tilde = x + N(0, sigma2)."""
    return p.posterior(x_tilde)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _gl_panels(f, lo: float, hi: float, panels: int) -> float:
    edges = np.linspace(lo, hi, panels + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    pts = centers[:, None] + half * _GL_NODES[None, :]
    vals = f(pts.ravel()).reshape(panels, -1)
    return float(half * np.sum(vals @ _GL_WEIGHTS))


def quadrature_oracle(p: PerturbedGmm, x_tilde: float, abs_tol: float = 1e-8):
    """Brute-force posterior (mean, var) via adaptive Gauss-Legendre quadrature.

    Integrates the joint density per mixture component over a window 10
    standard deviations wide, doubling the panel count until successive
    composite 32-point estimates agree within ``abs_tol``.  Point-mass
    components contribute exact delta terms.  Used only to validate the
    closed forms; never on the algorithm's hot path.
    """
    x_tilde = float(x_tilde)
    sigma2 = p.sigma2
    sigma = np.sqrt(sigma2)
    mass = 0.0
    m1 = 0.0
    m2 = 0.0
    for w, mu, tau2 in zip(p.base.weights, p.base.means, p.base.variances):
        if tau2 == 0.0:
            # point mass: integral against the delta is exact
            z = w * np.exp(-0.5 * (x_tilde - mu) ** 2 / sigma2) / np.sqrt(2 * np.pi * sigma2)
            mass += z
            m1 += z * mu
            m2 += z * mu * mu
            continue
        tau = np.sqrt(tau2)
        spread = 10.0 * max(tau, sigma)
        lo = min(mu, x_tilde) - spread
        hi = max(mu, x_tilde) + spread

        def joint(x, w=w, mu=mu, tau2=tau2):
            return (
                w
                * np.exp(-0.5 * (x - mu) ** 2 / tau2)
                / np.sqrt(2 * np.pi * tau2)
                * np.exp(-0.5 * (x_tilde - x) ** 2 / sigma2)
                / np.sqrt(2 * np.pi * sigma2)
            )

        integrands = (joint, lambda x: x * joint(x), lambda x: x * x * joint(x))
        values = [_gl_panels(f, lo, hi, 8) for f in integrands]
        panels = 16
        while True:
            refined = [_gl_panels(f, lo, hi, panels) for f in integrands]
            err = max(abs(a - b) for a, b in zip(refined, values))
            values = refined
            if err <= abs_tol * 0.1:
                break
            if panels >= 4096:
                raise QuadratureError(
                    f"error estimate {err:.3e} above target {abs_tol:.1e} at {panels} panels"
                )
            panels *= 2
        mass += values[0]
        m1 += values[1]
        m2 += values[2]
    if mass <= 0.0:
        raise QuadratureError("vanishing posterior mass; observation too far in the tail")
    mean = m1 / mass
    var = m2 / mass - mean * mean
    return mean, var
