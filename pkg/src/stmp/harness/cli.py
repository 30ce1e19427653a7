"""Command-line interface.

Subcommands:

* ``recover``   -- run the turbo loop on one problem; writes the estimate as
                   a tensor file plus a per-iteration trace CSV.
* ``sweep``     -- Monte-Carlo grid over compression ratios and noise levels.
* ``fit-score`` -- fit affine/constant-trace score models by DSM and report
                   losses against the analytic scores.
* ``se``        -- dump the state-evolution variance prediction as CSV.
* ``verify``    -- run the oracle self-check suite.

Exit codes: 0 success/converged, 1 runtime or check failure, 2 malformed
config, 3 recover hit the iteration cap without converging.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..driver import StmpConfig, run_stmp, se_predict
from ..priors import GmmPrior
from ..score import (
    AnalyticGmmScore,
    AnalyticGmmTrace,
    DsmDataset,
    DegenerateFitError,
    dsm_loss1,
    dsm_loss2,
    fit_affine_score,
    fit_constant_trace,
)
from .config import GENERATOR_ID, ConfigError, ExperimentConfig, load_config, save_model_file
from .problems import (
    ROLE_FIT_DATA,
    ROLE_FIT_NOISE,
    ROLE_OPERATOR,
    cell_seed,
    derive_seed,
    generate_problem,
    make_operator,
)
from .tensorfile import TensorFileError, read_tensor, write_tensor
from .verify import run_verify

NMSE_NOTE = "nmse_db = 10*log10(|x_hat - x|^2 / |x|^2)"


def _meta_lines(seed: int, extra: dict | None = None) -> list[str]:
    lines = [
        f"# generator: {GENERATOR_ID}",
        f"# seed: {seed}",
        f"# version: {__version__}",
        f"# nmse: {NMSE_NOTE}",
        f"# timestamp: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}",
    ]
    for key, value in (extra or {}).items():
        lines.insert(-1, f"# {key}: {value}")
    return lines


def _write_csv(path: Path, meta: list[str], header: list[str], rows) -> None:
    with open(path, "w") as fh:
        for line in meta:
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value) if np.isfinite(value) else "nan"
    return str(value)


def _analytic_models(prior: GmmPrior):
    return AnalyticGmmScore(prior), AnalyticGmmTrace(prior)


def _trace_rows(trace):
    for i in range(trace.iterations):
        yield (
            i + 1,
            2 * (i + 1),
            trace.v_a_pri[i],
            trace.v_a_ext[i],
            trace.v_b_pri[i],
            trace.v_b_ext[i],
            trace.nmse_db[i],
        )


TRACE_HEADER = ["iter", "nfe", "v_A_pri", "v_A_ext", "v_B_pri", "v_B_ext", "nmse_db"]


def cmd_recover(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output_path)
    truth = None
    if args.truth:
        truth = read_tensor(args.truth)
        if truth.ndim != 1:
            print(f"error: truth tensor must be rank 1, got rank {truth.ndim}", file=sys.stderr)
            return 1
    problem, x = generate_problem(
        cfg.n, cfg.m, cfg.operator_kind, cfg.prior, cfg.delta0, cfg.seed, truth
    )
    score_model, trace_model = _analytic_models(cfg.prior)
    estimate, trace = run_stmp(problem, score_model, trace_model, cfg.stmp, truth=x)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "estimate.tensor", estimate)
    extra = {
        "n": cfg.n,
        "m": cfg.m,
        "operator_kind": cfg.operator_kind,
        "delta0": repr(cfg.delta0),
    }
    _write_csv(
        out / "trace.csv", _meta_lines(cfg.seed, extra), TRACE_HEADER, _trace_rows(trace)
    )
    status = "converged" if trace.converged else "max-iters"
    print(
        f"{status} after {trace.iterations} iterations ({trace.nfe} NFEs), "
        f"final nmse {trace.nmse_db[-1]:.2f} dB -> {out}"
    )
    return 0 if trace.converged else 3


def _run_cell(cfg: ExperimentConfig, ratio: float, delta0: float, trial: int) -> dict:
    seed = cell_seed(cfg.seed, ratio, delta0, trial)
    m = max(1, round(ratio * cfg.n))
    row = {
        "ratio": ratio,
        "delta0": delta0,
        "trial": trial,
        "nmse_db": np.nan,
        "iterations": 0,
        "converged": False,
        "ext_clamps": 0,
        "var_clamps": 0,
        "error": "",
    }
    try:
        problem, x = generate_problem(
            cfg.n, m, cfg.operator_kind, cfg.prior, delta0, seed
        )
        score_model, trace_model = _analytic_models(cfg.prior)
        _, trace = run_stmp(problem, score_model, trace_model, cfg.stmp, truth=x)
        row.update(
            nmse_db=trace.nmse_db[-1],
            iterations=trace.iterations,
            converged=trace.converged,
            ext_clamps=trace.ext_clamps[-1],
            var_clamps=trace.var_floor_clamps[-1],
        )
    except Exception as exc:  # noqa: BLE001 - cell isolation is the point
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


SWEEP_HEADER = [
    "ratio", "delta0", "trials", "converged", "failed",
    "nmse_db_mean", "nmse_db_median", "iters_mean", "iters_median",
    "ext_clamps_total", "var_clamps_total",
]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if cfg.sweep is None:
        raise ConfigError("missing required field 'sweep' in config root")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    out = Path(args.out or cfg.output_path)
    cells = [
        (ratio, delta0, trial)
        for ratio in cfg.sweep.ratios
        for delta0 in cfg.sweep.delta0s
        for trial in range(cfg.trials)
    ]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        rows = list(pool.map(lambda c: _run_cell(cfg, *c), cells))

    aggregates = []
    for ratio in cfg.sweep.ratios:
        for delta0 in cfg.sweep.delta0s:
            group = [r for r in rows if r["ratio"] == ratio and r["delta0"] == delta0]
            ok = [r for r in group if not r["error"]]
            failed = len(group) - len(ok)
            nmses = [r["nmse_db"] for r in ok]
            iters = [r["iterations"] for r in ok]
            aggregates.append((
                ratio,
                delta0,
                len(group),
                sum(1 for r in ok if r["converged"]),
                failed,
                statistics.fmean(nmses) if nmses else np.nan,
                statistics.median(nmses) if nmses else np.nan,
                statistics.fmean(iters) if iters else np.nan,
                float(statistics.median(iters)) if iters else np.nan,
                sum(r["ext_clamps"] for r in ok),
                sum(r["var_clamps"] for r in ok),
            ))
    out.mkdir(parents=True, exist_ok=True)
    extra = {"n": cfg.n, "operator_kind": cfg.operator_kind, "trials": cfg.trials}
    _write_csv(out / "sweep.csv", _meta_lines(cfg.seed, extra), SWEEP_HEADER, aggregates)
    n_failed = sum(1 for r in rows if r["error"])
    for r in rows:
        if r["error"]:
            print(
                f"cell (ratio={r['ratio']}, delta0={r['delta0']}, trial={r['trial']}) "
                f"failed: {r['error']}",
                file=sys.stderr,
            )
    print(f"swept {len(cells)} cells ({n_failed} failures) -> {out / 'sweep.csv'}")
    return 0


def cmd_fit_score(args) -> int:
    cfg = load_config(args.config)
    if cfg.fit is None:
        raise ConfigError("missing required field 'fit' in config root")
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output_path)
    prior = cfg.prior
    clean = prior.sample((cfg.fit.n_samples, cfg.fit.dim), derive_seed(cfg.seed, ROLE_FIT_DATA))
    data = DsmDataset(clean, np.asarray(cfg.fit.sigma_grid), derive_seed(cfg.seed, ROLE_FIT_NOISE))
    affine = fit_affine_score(data)
    ctrace = fit_constant_trace(data, affine)
    analytic_score, analytic_trace = _analytic_models(prior)

    print(f"{'sigma':>10} {'loss1-fit':>12} {'loss1-exact':>12} {'loss2-fit':>12} {'loss2-exact':>12}")
    for sigma in data.sigma_grid:
        sigma = float(sigma)
        print(
            f"{sigma:>10.4g} "
            f"{dsm_loss1(affine, data, sigma):>12.6g} "
            f"{dsm_loss1(analytic_score, data, sigma):>12.6g} "
            f"{dsm_loss2(ctrace, affine, data, sigma):>12.6g} "
            f"{dsm_loss2(analytic_trace, analytic_score, data, sigma):>12.6g}"
        )
    out.mkdir(parents=True, exist_ok=True)
    path = out / "score_model.yaml"
    save_model_file(
        path,
        affine,
        ctrace,
        meta={
            "generator": GENERATOR_ID,
            "seed": cfg.seed,
            "n_samples": cfg.fit.n_samples,
            "dim": cfg.fit.dim,
        },
    )
    print(f"wrote {path}")
    return 0


SE_HEADER = ["iter", "v_A_pri", "v_B_pri", "mmse", "nmse_db"]


def cmd_se(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output_path)
    if cfg.operator_kind == "partial-orthogonal":
        spectrum = np.ones(cfg.m)
    else:
        op = make_operator(cfg.operator_kind, cfg.n, cfg.m, derive_seed(cfg.seed, ROLE_OPERATOR))
        spectrum = op.gram_spectrum()
    pred = se_predict(spectrum, cfg.n, cfg.prior, cfg.noise_var, cfg.stmp)
    rows = [
        (i + 1, pred.v_a_pri[i], pred.v_b_pri[i], pred.mmse[i], pred.nmse_db[i])
        for i in range(pred.iterations)
    ]
    out.mkdir(parents=True, exist_ok=True)
    extra = {"n": cfg.n, "m": cfg.m, "operator_kind": cfg.operator_kind}
    _write_csv(out / "se.csv", _meta_lines(cfg.seed, extra), SE_HEADER, rows)
    print(
        f"state evolution: {pred.iterations} iterations, "
        f"final predicted nmse {pred.nmse_db[-1]:.2f} dB -> {out / 'se.csv'}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stmp",
        description="Score-based turbo message passing for linear inverse problems.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output path")

    p = sub.add_parser("recover", help="recover one signal and write estimate + trace")
    common(p)
    p.add_argument("--truth", default=None, help="ground-truth tensor file to measure against")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over ratio/noise grids")
    common(p)
    p.add_argument("--workers", type=int, default=None, help="concurrent trial workers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-score", help="fit affine + constant-trace score models by DSM")
    common(p)
    p.set_defaults(func=cmd_fit_score)

    p = sub.add_parser("se", help="dump the state-evolution prediction")
    common(p)
    p.set_defaults(func=cmd_se)

    p = sub.add_parser("verify", help="run the oracle self-check suite")
    p.set_defaults(func=lambda args: run_verify())

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (TensorFileError, DegenerateFitError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
