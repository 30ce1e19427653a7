"""Gaussian message algebra for the turbo loop: extrinsic and damping updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Extrinsic variances are clamped into this range; imperfect variance
# estimates would otherwise produce near-zero or astronomically large
# pseudo-noise levels and destabilize the loop.
VAR_MIN = 1e-9
VAR_MAX = 1e9


class NoInformationGain(RuntimeError):
    """Posterior variance did not shrink below the prior variance.

    This is the pole of the extrinsic variance formula and the dominant
    numerical failure mode of EP-style loops.  Carries both variances so the
    caller can apply its recovery policy explicitly.
    """

    def __init__(self, v_post: float, v_pri: float):
        super().__init__(
            f"no information gained: v_post={v_post:.6e} >= v_pri={v_pri:.6e}"
        )
        self.v_post = v_post
        self.v_pri = v_pri


@dataclass
class ClampCounter:
    """Counts variance-clamp events so traces can surface them."""

    count: int = 0

    def bump(self):
        self.count += 1


@dataclass(frozen=True)
class GaussianMessage:
    """Mean vector plus a shared isotropic variance."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", float(self.variance))
        if not np.isfinite(mean).all():
            raise ValueError("message mean must be finite")
        if not (0.0 < self.variance < np.inf):
            raise ValueError(f"message variance must be in (0, inf), got {self.variance}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class DampingPolicy:
    """Convex-combination damping with factor beta in (0, 1]."""

    beta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"damping factor must be in (0, 1], got {self.beta}")


def extrinsic_variance(v_post: float, v_pri: float, counter: ClampCounter | None = None) -> float:
    """Scalar extrinsic variance 1/(1/v_post - 1/v_pri), clamped to [VAR_MIN, VAR_MAX]."""
    if v_post >= v_pri:
        raise NoInformationGain(v_post, v_pri)
    v_ext = 1.0 / (1.0 / v_post - 1.0 / v_pri)
    if v_ext < VAR_MIN or v_ext > VAR_MAX:
        if counter is not None:
            counter.bump()
        v_ext = min(max(v_ext, VAR_MIN), VAR_MAX)
    return v_ext


def extrinsic(
    post: GaussianMessage,
    pri: GaussianMessage,
    counter: ClampCounter | None = None,
) -> GaussianMessage:
    """Divide the prior message out of the posterior message.

    Variance: 1/(1/v_post - 1/v_pri).  Mean: v_ext (x_post/v_post - x_pri/v_pri).
    Raises NoInformationGain when v_post >= v_pri; the driver decides whether
    to clamp and retry.
    """
    if post.dim != pri.dim:
        raise ValueError(f"dimension mismatch: post {post.dim} vs pri {pri.dim}")
    v_ext = extrinsic_variance(post.variance, pri.variance, counter)
    mean = v_ext * (post.mean / post.variance - pri.mean / pri.variance)
    return GaussianMessage(mean, v_ext)


def damp(new: GaussianMessage, old: GaussianMessage, policy: DampingPolicy) -> GaussianMessage:
    """beta * new + (1 - beta) * old, applied to both mean and variance."""
    if new.dim != old.dim:
        raise ValueError(f"dimension mismatch: new {new.dim} vs old {old.dim}")
    beta = policy.beta
    if beta == 1.0:
        return new
    return GaussianMessage(
        beta * new.mean + (1.0 - beta) * old.mean,
        beta * new.variance + (1.0 - beta) * old.variance,
    )
