"""Self-check suite: oracle comparisons runnable from the CLI.

Each check returns its name, tolerance, and worst measured deviation.  The
suite is sized to finish in well under a minute.  Setting the environment
variable ``STMP_FAULT_SCORE_BIAS`` to a nonzero float perturbs the score
model used by the Tweedie checks; this negative control must make the suite
fail.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from ..driver import StmpConfig, run_stmp, se_predict
from ..linops import DenseOperator, SvdOperator, build_partial_orthogonal
from ..lmmse import LmmseProblem, lmmse_exact_joint, lmmse_posterior
from ..messages import GaussianMessage
from ..priors import GmmPrior, PerturbedGmm, quadrature_oracle
from ..score import AnalyticGmmScore, AnalyticGmmTrace

FAULT_ENV = "STMP_FAULT_SCORE_BIAS"


@dataclass
class CheckResult:
    name: str
    tolerance: float
    measured: float

    @property
    def passed(self) -> bool:
        return self.measured <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured:.3e} tolerance={self.tolerance:.1e}"


def naive_dct2(x: np.ndarray) -> np.ndarray:
    """O(N^2) orthonormal DCT-II reference, straight from the definition."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    w = np.cos(np.pi * (2 * j + 1) * k / (2 * n))
    scale = np.full(n, math.sqrt(2.0 / n))
    scale[0] = math.sqrt(1.0 / n)
    return scale * (w @ x)


def _random_prior(rng) -> GmmPrior:
    k = int(rng.integers(1, 5))
    w = rng.dirichlet(np.ones(k) * 2.0)
    w = w / w.sum()
    mu = rng.uniform(-3.0, 3.0, size=k)
    tau2 = rng.uniform(0.0, 2.0, size=k)
    if k > 1 and rng.random() < 0.3:
        tau2[int(rng.integers(k))] = 0.0  # spike component
    return GmmPrior(w, mu, tau2)


def check_tweedie(n_cases: int = 300, seed: int = 2024) -> list[CheckResult]:
    bias = float(os.environ.get(FAULT_ENV, "0") or 0.0)
    rng = np.random.Generator(np.random.Philox(seed))
    worst_mean = 0.0
    worst_var = 0.0
    for _ in range(n_cases):
        prior = _random_prior(rng)
        sigma2 = float(rng.uniform(0.01, 10.0))
        p = PerturbedGmm(prior, sigma2)
        k = int(rng.integers(prior.n_components))
        x_tilde = float(
            prior.means[k]
            + np.sqrt(prior.variances[k] + sigma2) * rng.standard_normal()
        )
        q_mean, q_var = quadrature_oracle(p, x_tilde)
        t_mean = x_tilde + sigma2 * (p.score1(x_tilde) + bias)
        t_var = sigma2 + sigma2 * sigma2 * p.score2(x_tilde)
        worst_mean = max(worst_mean, abs(t_mean - q_mean))
        worst_var = max(worst_var, abs(t_var - q_var))
    return [
        CheckResult("tweedie-mean-vs-quadrature", 1e-6, worst_mean),
        CheckResult("tweedie-variance-vs-quadrature", 1e-6, worst_var),
    ]


def check_adjoint(seed: int = 11) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed))
    m, n = 24, 40
    dense = DenseOperator(rng.standard_normal((m, n)))
    u, s, vt = np.linalg.svd(rng.standard_normal((m, n)), full_matrices=True)
    svd_op = SvdOperator(u, s, vt.T)
    part = build_partial_orthogonal(n, m, 5)
    worst = 0.0
    for op in (dense, svd_op, part):
        for _ in range(100):
            x = rng.standard_normal(n)
            r = rng.standard_normal(m)
            lhs = float(op.apply(x) @ r)
            rhs = float(x @ op.apply_adjoint(r))
            scale = np.linalg.norm(x) * np.linalg.norm(r) + 1.0
            worst = max(worst, abs(lhs - rhs) / scale)
    return CheckResult("adjoint-identity", 1e-10, worst)


def check_fast_dct(seed: int = 3) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for n in (2, 3, 8, 100, 256):
        op = build_partial_orthogonal(n, n, seed)
        x = rng.standard_normal(n)
        fast = op.apply(x)
        slow = naive_dct2(op.signs * x)[op.selection]
        worst = max(worst, float(np.abs(fast - slow).max()))
    return CheckResult("fast-dct-vs-naive", 1e-10, worst)


def check_backend_equivalence(n_problems: int = 10, seed: int = 17) -> list[CheckResult]:
    rng = np.random.Generator(np.random.Philox(seed))
    worst_mean = 0.0
    worst_var = 0.0
    for i in range(n_problems):
        m, n = 12, 24
        a = rng.standard_normal((m, n)) / np.sqrt(m)
        y = rng.standard_normal(m)
        noise_var = float(rng.uniform(1e-4, 1.0))
        pri = GaussianMessage(rng.standard_normal(n), float(rng.uniform(0.1, 4.0)))
        u, s, vt = np.linalg.svd(a, full_matrices=True)
        backends = [
            LmmseProblem(DenseOperator(a), y, noise_var),
            LmmseProblem(SvdOperator(u, s, vt.T), y, noise_var),
        ]
        part = build_partial_orthogonal(n, m, 100 + i)
        backends.append(LmmseProblem(part, rng.standard_normal(m), noise_var))
        backends.append(
            LmmseProblem(DenseOperator(part.to_dense()), backends[-1].y, noise_var)
        )
        ref = lmmse_posterior(backends[0], pri)
        alt = lmmse_posterior(backends[1], pri)
        worst_mean = max(
            worst_mean,
            float(np.linalg.norm(alt.mean - ref.mean) / np.linalg.norm(ref.mean)),
        )
        worst_var = max(worst_var, abs(alt.variance - ref.variance))
        p_ref = lmmse_posterior(backends[2], pri)
        p_alt = lmmse_posterior(backends[3], pri)
        worst_mean = max(
            worst_mean,
            float(np.linalg.norm(p_alt.mean - p_ref.mean) / np.linalg.norm(p_ref.mean)),
        )
        worst_var = max(worst_var, abs(p_alt.variance - p_ref.variance))
    return [
        CheckResult("lmmse-backend-mean", 1e-9, worst_mean),
        CheckResult("lmmse-backend-variance", 1e-10, worst_var),
    ]


def check_gaussian_fixed_point(seed: int = 29) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed))
    m, n = 32, 64
    prior = GmmPrior.gaussian(0.0, 1.0)
    a = rng.standard_normal((m, n)) / np.sqrt(m)
    x = prior.sample(n, 77)
    y = a @ x + 0.1 * rng.standard_normal(m)
    problem = LmmseProblem(DenseOperator(a), y, 0.01)
    estimate, _ = run_stmp(
        problem,
        AnalyticGmmScore(prior),
        AnalyticGmmTrace(prior),
        StmpConfig(max_iters=20, tol=1e-12),
    )
    exact_mean, _ = lmmse_exact_joint(problem, np.zeros(n), 1.0)
    rel = float(np.linalg.norm(estimate - exact_mean) / np.linalg.norm(exact_mean))
    return CheckResult("gaussian-fixed-point", 1e-8, rel)


def check_se_tracking(seed: int = 41) -> CheckResult:
    n = 2048
    m = n // 2
    prior = GmmPrior.bernoulli_gaussian(0.1)
    delta0 = 0.05 * prior.rms()
    rng = np.random.Generator(np.random.Philox(seed))
    op = build_partial_orthogonal(n, m, seed)
    x = prior.sample(n, seed + 1)
    y = op.apply(x) + delta0 * rng.standard_normal(m)
    problem = LmmseProblem(op, y, delta0 * delta0)
    cfg = StmpConfig(max_iters=3, tol=0.0, beta=0.8)
    _, trace = run_stmp(problem, AnalyticGmmScore(prior), AnalyticGmmTrace(prior), cfg)
    pred = se_predict(np.ones(m), n, prior, delta0 * delta0, cfg)
    rel = np.abs(np.asarray(trace.v_b_pri) - pred.v_b_pri[:3]) / pred.v_b_pri[:3]
    return CheckResult("se-vs-empirical-vbpri", 0.10, float(rel.max()))


def run_verify(printer=print) -> int:
    results: list[CheckResult] = []
    results.extend(check_tweedie())
    results.append(check_adjoint())
    results.append(check_fast_dct())
    results.extend(check_backend_equivalence())
    results.append(check_gaussian_fixed_point())
    results.append(check_se_tracking())
    failures = []
    for res in results:
        printer(res.line())
        if not res.passed:
            failures.append(res.name)
    if failures:
        printer(f"FAILED checks: {', '.join(failures)}")
        return 1
    printer(f"all {len(results)} checks passed")
    return 0
