"""Linear measurement operators with forward/adjoint application.

Three realizations of the measurement map A in y = Ax + n:

* ``DenseOperator``     -- explicit M x N matrix.
* ``SvdOperator``       -- A = U diag(s) V^T with the factors stored.
* ``PartialOrthogonalOperator`` -- A = S W Theta: random sign flip, orthonormal
  DCT-II, then row selection.  Satisfies A A^T = I, which the LMMSE estimator
  exploits via a scalar diagonal inverse.

All operators are immutable after construction and safe to apply from
multiple threads.  The squared singular values (``gram_spectrum``) are
computed once and cached.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from scipy.fft import dct, idct


class SvdConvergenceError(RuntimeError):
    """Raised when the SVD routine fails to converge."""


def _as_vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(
            f"{what}: expected a length-{n} vector, got shape {x.shape}"
        )
    return x


class LinearOperator(ABC):
    """Matrix-free linear map with adjoint and cached spectral structure."""

    shape: tuple[int, int]  # (M, N)

    @abstractmethod
    def apply(self, x) -> np.ndarray:
        """Return A x for a length-N vector x."""

    @abstractmethod
    def apply_adjoint(self, r) -> np.ndarray:
        """Return A^T r for a length-M vector r."""

    @abstractmethod
    def gram_spectrum(self) -> np.ndarray:
        """Squared singular values of A, length min(M, N), cached."""

    def to_dense(self) -> np.ndarray:
        """Materialize A as an M x N array (test/oracle scale only)."""
        m, n = self.shape
        cols = [self.apply(np.eye(n)[:, j]) for j in range(n)]
        return np.stack(cols, axis=1).reshape(m, n)

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)


class DenseOperator(LinearOperator):
    """Measurement operator backed by an explicit row-major matrix."""

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64, order="C")
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"matrix must be 2-D and nonempty, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("matrix entries must all be finite")
        self._a = a
        self.shape = a.shape
        self._spectrum: np.ndarray | None = None

    def apply(self, x) -> np.ndarray:
        x = _as_vector(x, self.shape[1], "apply")
        return self._a @ x

    def apply_adjoint(self, r) -> np.ndarray:
        r = _as_vector(r, self.shape[0], "apply_adjoint")
        return self._a.T @ r

    def gram_spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            try:
                s = np.linalg.svd(self._a, compute_uv=False)
            except np.linalg.LinAlgError as exc:
                raise SvdConvergenceError(f"SVD did not converge: {exc}") from exc
            self._spectrum = s * s
        return self._spectrum

    def to_dense(self) -> np.ndarray:
        return self._a.copy()


class SvdOperator(LinearOperator):
    """Operator given by a precomputed factorization A = U diag(s) V^T."""

    _ORTHO_TOL = 1e-10

    def __init__(self, u, singular_values, v):
        u = np.array(u, dtype=np.float64)
        s = np.array(singular_values, dtype=np.float64)
        v = np.array(v, dtype=np.float64)
        m, n = u.shape[0], v.shape[0]
        if u.shape != (m, m) or v.shape != (n, n):
            raise ValueError(f"U must be MxM and V NxN, got {u.shape} and {v.shape}")
        if s.ndim != 1 or s.shape[0] != min(m, n):
            raise ValueError(f"need min(M,N)={min(m, n)} singular values, got {s.shape}")
        if not (np.isfinite(s).all() and (s >= 0).all()):
            raise ValueError("singular values must be finite and nonnegative")
        if (np.diff(s) > 0).any():
            raise ValueError("singular values must be sorted nonincreasing")
        for name, q in (("U", u), ("V", v)):
            err = np.abs(q.T @ q - np.eye(q.shape[0])).max()
            if err > self._ORTHO_TOL:
                raise ValueError(f"{name} is not orthogonal (max deviation {err:.3e})")
        self._u, self._s, self._v = u, s, v
        self.shape = (m, n)

    def apply(self, x) -> np.ndarray:
        m, n = self.shape
        x = _as_vector(x, n, "apply")
        z = self._s * (self._v.T @ x)[: self._s.size]
        out = np.zeros(m)
        out[: z.size] = z
        return self._u @ out

    def apply_adjoint(self, r) -> np.ndarray:
        m, n = self.shape
        r = _as_vector(r, m, "apply_adjoint")
        z = self._s * (self._u.T @ r)[: self._s.size]
        out = np.zeros(n)
        out[: z.size] = z
        return self._v @ out

    def gram_spectrum(self) -> np.ndarray:
        return self._s * self._s

    def to_dense(self) -> np.ndarray:
        m, n = self.shape
        sigma = np.zeros((m, n))
        np.fill_diagonal(sigma, self._s)
        return self._u @ sigma @ self._v.T


class PartialOrthogonalOperator(LinearOperator):
    """A = S W Theta: sign flip, orthonormal DCT-II, row selection.

    ``selection`` holds the M retained DCT rows, ``signs`` the +-1 diagonal
    of Theta.  Row-orthonormality of W makes A A^T = I exactly, so the gram
    spectrum is the all-ones vector.  apply/apply_adjoint run in O(N log N).
    """

    def __init__(self, selection, signs, transform_kind: str = "dct2-orthonormal"):
        selection = np.array(selection, dtype=np.intp)
        signs = np.array(signs, dtype=np.float64)
        n = signs.shape[0]
        if transform_kind != "dct2-orthonormal":
            raise ValueError(f"unsupported transform kind: {transform_kind!r}")
        if selection.ndim != 1 or selection.size < 1:
            raise ValueError("selection must be a nonempty index vector")
        if np.unique(selection).size != selection.size:
            raise ValueError("selection indices must be distinct")
        if selection.min() < 0 or selection.max() >= n:
            raise ValueError(f"selection indices must lie in [0, {n})")
        if not np.isin(signs, (-1.0, 1.0)).all():
            raise ValueError("signs must be +-1")
        self._selection = selection
        self._signs = signs
        self.transform_kind = transform_kind
        self.shape = (selection.size, n)

    @property
    def selection(self) -> np.ndarray:
        return self._selection

    @property
    def signs(self) -> np.ndarray:
        return self._signs

    def apply(self, x) -> np.ndarray:
        x = _as_vector(x, self.shape[1], "apply")
        return dct(self._signs * x, type=2, norm="ortho")[self._selection]

    def apply_adjoint(self, r) -> np.ndarray:
        r = _as_vector(r, self.shape[0], "apply_adjoint")
        full = np.zeros(self.shape[1])
        full[self._selection] = r
        # inverse of the orthonormal DCT-II is its transpose
        return self._signs * idct(full, type=2, norm="ortho")

    def gram_spectrum(self) -> np.ndarray:
        return np.ones(self.shape[0])

    def to_dense(self) -> np.ndarray:
        w = dct(np.eye(self.shape[1]), type=2, norm="ortho", axis=0)
        return w[self._selection] * self._signs[None, :]


def build_partial_orthogonal(n: int, m: int, seed: int) -> PartialOrthogonalOperator:
    """Draw a random A = S W Theta operator, deterministic given ``seed``.

    The M row indices are a uniformly random subset drawn by partial
    Fisher-Yates; the signs are i.i.d. uniform on {-1, +1}.  Randomness comes
    from the counter-based Philox generator so results are reproducible
    across platforms.
    """
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    rng = np.random.Generator(np.random.Philox(seed))
    pool = np.arange(n)
    for i in range(m):
        j = i + int(rng.integers(n - i))
        pool[i], pool[j] = pool[j], pool[i]
    selection = pool[:m].copy()
    signs = rng.integers(0, 2, size=n) * 2.0 - 1.0
    return PartialOrthogonalOperator(selection, signs)
