"""Reconstruction quality metrics."""

from __future__ import annotations

import numpy as np

# dB guards for exact reconstructions (log of zero error)
NMSE_FLOOR_DB = -300.0
PSNR_CAP_DB = 300.0


def metrics(estimate, truth, peak: float | None = None) -> tuple[float, float]:
    """Return (nmse_db, psnr_db) of an estimate against the ground truth.

    NMSE is ||x_hat - x||^2 / ||x||^2 in dB.  PSNR uses
    peak^2 * N / ||x_hat - x||^2 with ``peak`` defaulting to max|x|, the
    natural dynamic range for synthetic signals.
    """
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    energy = float(np.dot(truth.ravel(), truth.ravel()))
    if energy == 0.0:
        raise ValueError("NMSE undefined for an all-zero ground truth")
    err = float(np.sum((estimate - truth) ** 2))
    if peak is None:
        peak = float(np.abs(truth).max())
    if err == 0.0:
        return NMSE_FLOOR_DB, PSNR_CAP_DB
    nmse_db = max(10.0 * np.log10(err / energy), NMSE_FLOOR_DB)
    psnr_db = min(10.0 * np.log10(peak * peak * truth.size / err), PSNR_CAP_DB)
    return nmse_db, psnr_db
