"""Score models, Tweedie denoising, and denoising score matching (DSM).

A first-order score model maps (x_tilde, sigma) to an estimate of the
gradient of the log perturbed density, coordinatewise.  A trace score model
returns the trace of its Hessian.  Plugged into Tweedie's formula they give
the posterior mean and variance of module B:

    mean     = x + v * s(x, sqrt(v))
    variance = (v^2 / N) * trace(x, sqrt(v)) + v

Analytic realizations wrap the exact GMM scores; trainable realizations are
restricted to families with closed-form DSM minimizers (affine first-order
score, per-sigma constant trace).  Off-grid sigma values use linear
interpolation of the fitted coefficients, clamped at the grid endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .messages import ClampCounter, GaussianMessage
from .priors import GmmPrior, PerturbedGmm

# Posterior variance floor, relative to the incoming variance.
VAR_FLOOR_FRACTION = 1e-6


class DegenerateFitError(RuntimeError):
    """Raised when the least-squares design has no variation to fit."""


class AnalyticGmmScore:
    """Exact first-order score of a GMM prior perturbed at level sigma."""

    def __init__(self, prior: GmmPrior):
        self.prior = prior

    def __call__(self, x, sigma: float):
        return PerturbedGmm(self.prior, sigma * sigma).score1(np.asarray(x, dtype=np.float64))


class AnalyticGmmTrace:
    """Exact Hessian trace: coordinatewise second-order scores, summed."""

    def __init__(self, prior: GmmPrior):
        self.prior = prior

    def __call__(self, x, sigma: float):
        x = np.asarray(x, dtype=np.float64)
        vals = PerturbedGmm(self.prior, sigma * sigma).score2(x)
        out = np.sum(vals, axis=-1)
        return float(out) if x.ndim == 1 else out


def _check_sigma_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("sigma grid must be a nonempty 1-D array")
    if (grid <= 0).any() or (np.diff(grid) <= 0).any():
        raise ValueError("sigma grid must be strictly increasing and positive")
    return grid


@dataclass(frozen=True)
class AffineScore:
    """Per-coordinate affine score s(x, sigma) = a(sigma) x + b(sigma).

    Coefficients live on a sigma grid; evaluation interpolates linearly in
    sigma and clamps to the endpoints outside the grid (np.interp semantics).
    """

    sigma_grid: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        grid = _check_sigma_grid(self.sigma_grid)
        a = np.asarray(self.slopes, dtype=np.float64)
        b = np.asarray(self.intercepts, dtype=np.float64)
        if a.shape != grid.shape or b.shape != grid.shape:
            raise ValueError("coefficient arrays must match the sigma grid")
        object.__setattr__(self, "sigma_grid", grid)
        object.__setattr__(self, "slopes", a)
        object.__setattr__(self, "intercepts", b)

    def coefficients(self, sigma: float) -> tuple[float, float]:
        a = float(np.interp(sigma, self.sigma_grid, self.slopes))
        b = float(np.interp(sigma, self.sigma_grid, self.intercepts))
        return a, b

    def __call__(self, x, sigma: float):
        a, b = self.coefficients(sigma)
        return a * np.asarray(x, dtype=np.float64) + b

    def to_dict(self) -> dict:
        return {
            "kind": "affine-score",
            "sigma_grid": [float(v) for v in self.sigma_grid],
            "slopes": [float(v) for v in self.slopes],
            "intercepts": [float(v) for v in self.intercepts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineScore":
        return cls(
            np.asarray(d["sigma_grid"], dtype=np.float64),
            np.asarray(d["slopes"], dtype=np.float64),
            np.asarray(d["intercepts"], dtype=np.float64),
        )


@dataclass(frozen=True)
class ConstantTrace:
    """Input-independent Hessian trace, one value per grid sigma.

    Stored per coordinate (mean curvature of the log density), so the model
    transfers across dimensions: trace(x, sigma) = len(x) * c(sigma).
    """

    sigma_grid: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        grid = _check_sigma_grid(self.sigma_grid)
        c = np.asarray(self.curvature, dtype=np.float64)
        if c.shape != grid.shape:
            raise ValueError("curvature array must match the sigma grid")
        object.__setattr__(self, "sigma_grid", grid)
        object.__setattr__(self, "curvature", c)

    def curvature_at(self, sigma: float) -> float:
        return float(np.interp(sigma, self.sigma_grid, self.curvature))

    def __call__(self, x, sigma: float):
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[-1]
        value = n * self.curvature_at(sigma)
        if x.ndim == 1:
            return value
        return np.full(x.shape[0], value)

    def to_dict(self) -> dict:
        return {
            "kind": "constant-trace",
            "sigma_grid": [float(v) for v in self.sigma_grid],
            "curvature": [float(v) for v in self.curvature],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstantTrace":
        return cls(
            np.asarray(d["sigma_grid"], dtype=np.float64),
            np.asarray(d["curvature"], dtype=np.float64),
        )


def default_sigma_grid(signal_rms: float = 1.0, count: int = 16) -> np.ndarray:
    """L log-spaced noise levels spanning [1e-3, 10] times the signal RMS."""
    return signal_rms * np.geomspace(1e-3, 10.0, count)


class DsmDataset:
    """Clean prior samples plus a reproducible noise stream for DSM losses.

    The standard-normal noise matrix is drawn once from the Philox stream of
    ``noise_seed`` and shared across all sigma values (common random
    numbers), so losses at different noise levels are directly comparable
    and every evaluation is deterministic.
    """

    def __init__(self, clean, sigma_grid, noise_seed: int):
        clean = np.asarray(clean, dtype=np.float64)
        if clean.ndim != 2 or clean.shape[0] < 1 or clean.shape[1] < 1:
            raise ValueError(f"clean data must be a nonempty n x N matrix, got {clean.shape}")
        self.clean = clean
        self.sigma_grid = _check_sigma_grid(sigma_grid)
        self.noise_seed = int(noise_seed)
        self._noise: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.clean.shape[0]

    @property
    def dim(self) -> int:
        return self.clean.shape[1]

    @property
    def noise(self) -> np.ndarray:
        if self._noise is None:
            rng = np.random.Generator(np.random.Philox(self.noise_seed))
            self._noise = rng.standard_normal(self.clean.shape)
        return self._noise

    def noisy(self, sigma: float) -> np.ndarray:
        return self.clean + sigma * self.noise


def tweedie_denoise(
    model,
    trace_model,
    pri: GaussianMessage,
    counter: ClampCounter | None = None,
) -> GaussianMessage:
    """Module B posterior message via Tweedie's formula.

    The variance is floored at VAR_FLOOR_FRACTION * v_pri (a trace estimate
    below -N/v_pri would otherwise emit a nonpositive variance); floor hits
    are counted.
    """
    v = pri.variance
    sigma = float(np.sqrt(v))
    n = pri.dim
    s = np.asarray(model(pri.mean, sigma), dtype=np.float64)
    if s.shape != pri.mean.shape or not np.isfinite(s).all():
        raise RuntimeError(f"score model {type(model).__name__} returned invalid output")
    mean = pri.mean + v * s
    trace = float(trace_model(pri.mean, sigma))
    if not np.isfinite(trace):
        raise RuntimeError(f"trace model {type(trace_model).__name__} returned invalid output")
    var = (v * v / n) * trace + v
    floor = VAR_FLOOR_FRACTION * v
    if var < floor:
        if counter is not None:
            counter.bump()
        var = floor
    return GaussianMessage(mean, var)


def dsm_loss1(model, data: DsmDataset, sigma: float) -> float:
    """Monte-Carlo first-order DSM objective at one noise level.

    Mean over samples of || s(x_tilde, sigma) + (x_tilde - x) / sigma^2 ||^2.
    """
    if data.n_samples < 1:
        raise ValueError("empty dataset")
    x = data.clean
    xt = data.noisy(sigma)
    resid = np.asarray(model(xt, sigma), dtype=np.float64) + (xt - x) / sigma**2
    return float(np.mean(np.sum(resid * resid, axis=1)))


def dsm_loss2(trace_model, first_order, data: DsmDataset, sigma: float) -> float:
    """Monte-Carlo trace-matching objective at one noise level.

    Mean of | tr(S(x_tilde, sigma)) - ||b_hat||^2 + N/sigma^2 |^2 with
    b_hat = s(x_tilde, sigma) + (x_tilde - x)/sigma^2 built from the supplied
    first-order model.
    """
    if data.n_samples < 1:
        raise ValueError("empty dataset")
    x = data.clean
    xt = data.noisy(sigma)
    b_hat = np.asarray(first_order(xt, sigma), dtype=np.float64) + (xt - x) / sigma**2
    traces = np.asarray(trace_model(xt, sigma), dtype=np.float64)
    resid = traces - np.sum(b_hat * b_hat, axis=1) + data.dim / sigma**2
    return float(np.mean(resid * resid))


def default_weight1(sigma: float) -> float:
    """lambda_1(sigma) = sigma^2, normalizing first-order residuals to O(1)."""
    return sigma * sigma


def default_weight2(sigma: float) -> float:
    """lambda_2(sigma) = sigma^4, normalizing trace residuals to O(1)."""
    return sigma**4


def dsm_unified(model, data: DsmDataset, weights=None, trace_model=None) -> float:
    """(1/L) sum_i lambda(sigma_i) * loss(sigma_i) over the dataset grid.

    With ``trace_model`` absent this is the first-order objective of
    ``model`` (default weights sigma^2); otherwise the trace objective of
    ``trace_model`` with ``model`` frozen as first-order (default sigma^4).
    ``weights`` may be a mapping sigma -> lambda covering the whole grid.
    """
    grid = data.sigma_grid
    if weights is None:
        weight_fn = default_weight2 if trace_model is not None else default_weight1
        lam = [weight_fn(s) for s in grid]
    else:
        try:
            lam = [float(weights[float(s)]) for s in grid]
        except KeyError as exc:
            raise ValueError(f"missing weight for grid sigma {exc.args[0]!r}") from exc
    if any(v <= 0 for v in lam):
        raise ValueError("weights must be positive")
    total = 0.0
    for s, w in zip(grid, lam):
        if trace_model is None:
            total += w * dsm_loss1(model, data, float(s))
        else:
            total += w * dsm_loss2(trace_model, model, data, float(s))
    return total / grid.size


def fit_affine_score(data: DsmDataset) -> AffineScore:
    """Closed-form DSM minimizer over the per-coordinate affine family.

    For each grid sigma the objective is ordinary least squares of the
    targets -(x_tilde - x)/sigma^2 against x_tilde, pooled over all samples
    and coordinates; the normal equations give a(sigma), b(sigma) directly.
    """
    if data.clean.size < 3:
        raise ValueError("need at least 3 samples per grid point")
    slopes = np.empty(data.sigma_grid.size)
    intercepts = np.empty(data.sigma_grid.size)
    for i, sigma in enumerate(data.sigma_grid):
        xt = data.noisy(float(sigma)).ravel()
        target = -(xt - data.clean.ravel()) / sigma**2
        var = np.var(xt)
        if var == 0.0:
            raise DegenerateFitError(f"all observations identical at sigma={sigma}")
        a = np.mean((xt - xt.mean()) * (target - target.mean())) / var
        slopes[i] = a
        intercepts[i] = target.mean() - a * xt.mean()
    return AffineScore(data.sigma_grid.copy(), slopes, intercepts)


def fit_constant_trace(data: DsmDataset, first_order) -> ConstantTrace:
    """Closed-form trace-objective minimizer over per-sigma constants.

    The minimizer of the squared residual is the sample mean of
    ||b_hat||^2 - N/sigma^2; stored per coordinate.
    """
    if data.clean.size < 3:
        raise ValueError("need at least 3 samples per grid point")
    curvature = np.empty(data.sigma_grid.size)
    for i, sigma in enumerate(data.sigma_grid):
        sigma = float(sigma)
        xt = data.noisy(sigma)
        b_hat = np.asarray(first_order(xt, sigma), dtype=np.float64) + (xt - data.clean) / sigma**2
        curvature[i] = np.mean(b_hat * b_hat) - 1.0 / sigma**2
    return ConstantTrace(data.sigma_grid.copy(), curvature)
