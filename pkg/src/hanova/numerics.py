"""Deterministic RNG streams and the numerical primitives used by the estimators.

The generator is counter-based (Philox) keyed through ``SeedSequence`` spawn
keys, so a stream is identified by ``(seed, path)`` alone: the same ids give
the same draws no matter how work is chunked or which thread runs it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    InvalidParameterError,
    RankDeficientConstraintsError,
    SingularMatrixError,
)

# Relative singular-value cutoff used everywhere a rank decision is made.
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    ``seed`` is the user-facing 64-bit seed; ``path`` is a tuple of stream
    ids (batch, chain, draw, ...) appended with :meth:`child`.  Identical
    ``(seed, path)`` always yields an identical sequence.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def matrix_rank(a: np.ndarray) -> int:
    """Rank with singular values below ``RANK_RTOL`` x largest counted as zero."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for square ``a``.

    Raises ``SingularMatrixError`` if ``a`` is rank-deficient beyond the
    rank tolerance; otherwise the solution satisfies
    ``||a x - b|| <= 1e-10 ||b||``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SingularMatrixError(f"matrix is not square: shape {a.shape}")
    if matrix_rank(a) < a.shape[0]:
        raise SingularMatrixError("matrix is singular to working precision")
    x = np.linalg.solve(a, b)
    resid = np.linalg.norm(a @ x - b)
    if resid > 1e-10 * max(np.linalg.norm(b), 1.0):
        raise SingularMatrixError(
            f"solution residual {resid:.3e} exceeds tolerance; matrix is ill-conditioned"
        )
    return x


def project_constrained(beta: np.ndarray, constraints: np.ndarray) -> np.ndarray:
    """Project ``beta`` onto the null space of the constraint matrix.

    ``constraints`` has shape (c, J); the result is
    ``[I - C' (C C')^-1 C] beta``, the component of ``beta`` satisfying
    ``C beta = 0``.  The projection is idempotent.  An empty ``constraints``
    (c = 0) returns ``beta`` unchanged.
    """
    beta = np.asarray(beta, dtype=float)
    c = np.asarray(constraints, dtype=float)
    if c.size == 0:
        return beta.copy()
    if c.ndim != 2 or c.shape[1] != beta.shape[0]:
        raise RankDeficientConstraintsError(
            f"constraint shape {c.shape} incompatible with beta of length {beta.shape[0]}"
        )
    if matrix_rank(c) < c.shape[0]:
        raise RankDeficientConstraintsError("constraint matrix is not full rank")
    gram = c @ c.T
    return beta - c.T @ np.linalg.solve(gram, c @ beta)


# --- distribution samplers ----------------------------------------------


def sample_chisq(df: float, rng: np.random.Generator) -> float:
    """One chi-square draw with ``df`` degrees of freedom (df >= 1)."""
    if df < 1:
        raise InvalidParameterError(f"chi-square df must be >= 1, got {df}")
    return float(rng.chisquare(df))


def sample_scaled_inv_chisq(nu: float, s0sq: float, rng: np.random.Generator) -> float:
    """One draw of nu * s0sq / chisq(nu) (scaled inverse chi-square)."""
    if nu < 1:
        raise InvalidParameterError(f"scaled-inv-chisq nu must be >= 1, got {nu}")
    if s0sq < 0:
        raise InvalidParameterError(f"scale must be >= 0, got {s0sq}")
    return nu * s0sq / float(rng.chisquare(nu))


def sample_trunc_scaled_inv_chisq(
    nu: float, s0sq: float, upper: float, rng: np.random.Generator
) -> float:
    """Scaled-inverse-chi-square draw conditioned on the result being <= ``upper``.

    Uses the exact inverse-CDF construction: ``x <= upper`` iff the underlying
    chi-square exceeds ``nu * s0sq / upper``, so the chi-square is drawn from
    its upper tail directly.  No rejection loop, fully deterministic.
    """
    if nu < 1:
        raise InvalidParameterError(f"scaled-inv-chisq nu must be >= 1, got {nu}")
    if upper <= 0:
        raise InvalidParameterError(f"upper bound must be > 0, got {upper}")
    threshold = nu * s0sq / upper
    tail = special.chdtrc(nu, threshold)  # P(chisq > threshold)
    u = rng.uniform()
    q = u * tail
    if q <= 0:
        # Truncation region has vanishing mass; pin to the boundary.
        return upper
    chisq = special.chdtri(nu, q)  # x with P(chisq > x) = q, so x >= threshold
    return min(nu * s0sq / chisq, upper)


def sample_normal(mean: float, sd: float, rng: np.random.Generator) -> float:
    if sd < 0:
        raise InvalidParameterError(f"sd must be >= 0, got {sd}")
    if sd == 0:
        return float(mean)
    return float(rng.normal(mean, sd))


def f_upper_tail(f: float, df1: float, df2: float) -> float:
    """P(F_{df1,df2} > f), via the regularized incomplete beta function."""
    if df1 <= 0 or df2 <= 0:
        raise InvalidParameterError(f"F degrees of freedom must be positive, got ({df1}, {df2})")
    if f < 0:
        raise InvalidParameterError(f"F statistic must be >= 0, got {f}")
    if f == 0:
        return 1.0
    if np.isinf(f):
        return 0.0
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(df2 / 2.0, df1 / 2.0, x))
