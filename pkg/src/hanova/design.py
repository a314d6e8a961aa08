"""Design construction: cell structure, degrees of freedom, containment order.

Every batch here is an indicator design: each observation pulls exactly one
coefficient per batch, so a batch is fully described by a length-n array of
cell ids.  Span containment between two indicator batches is therefore a
partition-refinement question and is decided exactly; ranks are only needed
to count constraints against the *combined* span of a batch's ancestors.

Degrees of freedom follow the projection definition: df_m is the rank of
batch m's column space after the spans of all strictly coarser batches
(its ancestors, grand mean included) are projected out.  The rank is
computed densely in the batch's coefficient coordinates; when that matrix
would be too large, the orthogonal-design recursion
``df_m = J_m - 1 - sum(df_k over ancestors)`` is used instead, and the
global df bookkeeping is verified afterwards so that non-orthogonal
(partially aliased) designs are rejected rather than silently miscounted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DesignError,
    DimensionMismatchError,
    EmptyCellError,
    UnknownFactorError,
)
from .formula import AliasDecl, Term
from .numerics import RANK_RTOL

RESIDUAL_LABEL = "residual"

# Largest dense matrix (entries) we build for exact ranks / constraint bases.
_DENSE_LIMIT = 2_000_000


@dataclass
class Dataset:
    """Observed responses plus per-factor level codes.

    ``levels[f]`` holds dense 0-based level indices; ``level_names[f]``
    maps an index back to its label.
    """

    y: np.ndarray
    levels: dict[str, np.ndarray]
    level_names: dict[str, list[str]]

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.size < 1:
            raise DimensionMismatchError("response must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(self.y)):
            raise DimensionMismatchError("response contains missing/non-finite values")
        n = self.y.size
        for name, lv in self.levels.items():
            lv = np.asarray(lv, dtype=np.int64)
            self.levels[name] = lv
            if lv.shape != (n,):
                raise DimensionMismatchError(
                    f"factor {name!r} has {lv.shape[0] if lv.ndim == 1 else '?'} values, expected {n}"
                )
            k = len(self.level_names[name])
            if lv.min() < 0 or lv.max() >= k:
                raise DimensionMismatchError(f"factor {name!r} has level index out of range")

    @property
    def n(self) -> int:
        return self.y.size

    @classmethod
    def from_columns(cls, y, columns: dict) -> "Dataset":
        """Build from raw label columns, coding levels in first-appearance order."""
        levels = {}
        level_names = {}
        for name, values in columns.items():
            seen: dict = {}
            codes = np.empty(len(values), dtype=np.int64)
            for i, v in enumerate(values):
                codes[i] = seen.setdefault(v, len(seen))
            levels[name] = codes
            level_names[name] = [str(v) for v in seen]
        return cls(np.asarray(y, dtype=float), levels, level_names)


@dataclass
class Batch:
    """One row of the table: a partition of the observations into cells."""

    label: str
    factors: tuple[str, ...]
    cells: np.ndarray  # (n,) dense cell ids
    j: int  # number of observed cells (J_m)
    counts: np.ndarray  # (j,) observations per cell
    cell_levels: np.ndarray | None  # (j, len(factors)) level indices, None for synthetic
    first_obs: np.ndarray = field(default=None, repr=False)  # first observation per cell
    explicit_residual: bool = False

    def __post_init__(self):
        if self.first_obs is None:
            self.first_obs = np.unique(self.cells, return_index=True)[1]


def _build_batch(dataset: Dataset, term: Term) -> Batch:
    cells = np.zeros(dataset.n, dtype=np.int64)
    width = 1
    for f in term.factors:
        if f not in dataset.levels:
            raise UnknownFactorError(f)
        lv = dataset.levels[f]
        raw = cells * len(dataset.level_names[f]) + lv
        _, cells = np.unique(raw, return_inverse=True)
        width = cells.max() + 1
    j = int(cells.max()) + 1
    counts = np.bincount(cells, minlength=j)
    first = np.unique(cells, return_index=True)[1]
    cell_levels = np.stack([dataset.levels[f][first] for f in term.factors], axis=1)
    return Batch(term.label, term.factors, cells, j, counts, cell_levels,
                 first_obs=first, explicit_residual=term.explicit_residual)


def _refines(fine: Batch, coarse: Batch) -> bool:
    """True if ``fine``'s partition refines ``coarse``'s (span_coarse inside span_fine)."""
    return np.array_equal(coarse.cells, coarse.cells[fine.first_obs][fine.cells])


@dataclass
class BalanceReport:
    batch_counts: list[np.ndarray]
    balanced: bool
    offending: tuple[str, str] | None  # (batch label, cell description)


@dataclass
class DesignModel:
    """Immutable after build; safe to share across threads."""

    dataset: Dataset
    batches: list[Batch]
    df: np.ndarray  # (M,)
    constraint_counts: np.ndarray  # (M,)
    ancestors: list[frozenset]  # strictly coarser batches, per batch
    containment: list[frozenset]  # I(m): strictly finer batches, per batch
    residual_index: int
    batch_balanced: np.ndarray
    balanced: bool
    _cellmaps: dict = field(default_factory=dict, repr=False)
    _constraints: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def m(self) -> int:
        return len(self.batches)

    @property
    def labels(self) -> list[str]:
        return [b.label for b in self.batches]

    @property
    def j(self) -> np.ndarray:
        return np.array([b.j for b in self.batches])

    def topo_order(self) -> list[int]:
        """Batch indices with every ancestor before its descendants."""
        return sorted(range(self.m), key=lambda m: (len(self.ancestors[m]), m))

    def cellmap(self, m: int, k: int) -> np.ndarray:
        """Map of batch-m cells into batch-k cells (requires k coarser than m)."""
        key = (m, k)
        if key not in self._cellmaps:
            self._cellmaps[key] = self.batches[k].cells[self.batches[m].first_obs]
        return self._cellmaps[key]

    def _maximal_ancestors(self, m: int) -> list[int]:
        anc = self.ancestors[m]
        return [k for k in sorted(anc)
                if not any(k in self.ancestors[k2] for k2 in anc if k2 != k)]

    def _ancestor_matrix(self, m: int) -> np.ndarray:
        """Grand mean plus maximal-ancestor indicators in batch-m coordinates."""
        jm = self.batches[m].j
        maximal = self._maximal_ancestors(m)
        width = 1 + sum(self.batches[k].j for k in maximal)
        if jm * width > _DENSE_LIMIT:
            raise DesignError(
                f"ancestor matrix for batch {self.batches[m].label!r} is too large "
                f"({jm} x {width}) for a dense constraint basis"
            )
        u = np.zeros((jm, width))
        u[:, 0] = 1.0
        col = 1
        for k in maximal:
            u[np.arange(jm), col + self.cellmap(m, k)] = 1.0
            col += self.batches[k].j
        return u

    def constraint_matrix(self, m: int) -> np.ndarray:
        """C_m: orthonormal basis (rows) of the removed ancestor subspace.

        The fitted coefficients of a balanced design satisfy
        ``constraint_matrix(m) @ beta_hat == 0``.
        """
        if m not in self._constraints:
            u = self._ancestor_matrix(m)
            w, s, _ = np.linalg.svd(u, full_matrices=False)
            rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
            self._constraints[m] = w[:, :rank].T.copy()
        return self._constraints[m]

    def indicator_matrix(self, m: int) -> np.ndarray:
        """Dense n x J_m 0/1 matrix X_m (small designs / test oracles only)."""
        b = self.batches[m]
        if self.n * b.j > _DENSE_LIMIT:
            raise DesignError(f"indicator matrix for {b.label!r} too large to densify")
        x = np.zeros((self.n, b.j))
        x[np.arange(self.n), b.cells] = 1.0
        return x

    def project_batch_coefficients(self, m: int, beta: np.ndarray) -> np.ndarray:
        """Remove the ancestor-span component of a coefficient vector.

        Equals ``project_constrained(beta, constraint_matrix(m))``.  For
        balanced designs it is computed by the cell-mean sweep (exact by
        orthogonality) so that no dense constraint basis is ever formed.
        """
        beta = np.asarray(beta, dtype=float)
        b = self.batches[m]
        if beta.shape != (b.j,):
            raise DimensionMismatchError(
                f"coefficient vector for {b.label!r} must have length {b.j}"
            )
        if not self.balanced:
            from .numerics import project_constrained

            return project_constrained(beta, self.constraint_matrix(m))
        out = beta - np.average(beta, weights=b.counts)
        order = [k for k in self.topo_order() if k in self.ancestors[m]]
        for k in order:
            cm = self.cellmap(m, k)
            jk = self.batches[k].j
            wsum = np.bincount(cm, weights=b.counts, minlength=jk)
            vsum = np.bincount(cm, weights=b.counts * out, minlength=jk)
            out = out - (vsum / wsum)[cm]
        return out


def sweep_decompose(design: DesignModel, values: np.ndarray):
    """Sequential cell-mean sweep of a data vector in containment order.

    Returns ``(mean, coefficient arrays per batch, remainder)``.  With a
    per-observation residual batch present the remainder is exactly zero
    and the components reproduce ``values``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (design.n,):
        raise DimensionMismatchError(f"expected {design.n} values, got {values.shape}")
    r = values.copy()
    mean = float(r.mean())
    r -= mean
    betas: list = [None] * design.m
    for m in design.topo_order():
        b = design.batches[m]
        if np.any(b.counts == 0):
            raise EmptyCellError(f"batch {b.label!r} has an empty cell")
        beta = np.bincount(b.cells, weights=r, minlength=b.j) / b.counts
        betas[m] = beta
        r -= beta[b.cells]
    return mean, betas, r


def _exact_constraint_count(design_batches, ancestors, m, cellmap) -> int | None:
    """Rank of the combined ancestor span in batch-m coordinates, or None if too big."""
    jm = design_batches[m].j
    anc = ancestors[m]
    maximal = [k for k in sorted(anc)
               if not any(k in ancestors[k2] for k2 in anc if k2 != k)]
    width = 1 + sum(design_batches[k].j for k in maximal)
    if jm * width > _DENSE_LIMIT:
        return None
    u = np.zeros((jm, width))
    u[:, 0] = 1.0
    col = 1
    for k in maximal:
        u[np.arange(jm), col + cellmap(m, k)] = 1.0
        col += design_batches[k].j
    s = np.linalg.svd(u, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * s[0]))


def _check_pairwise_overlap(batches, ancestors, refines, df):
    """Reject partially aliased pairs: spans that overlap beyond their shared ancestors.

    For two indicator batches the intersection dimension equals the number
    of connected components of the bipartite graph linking co-occurring
    cells; orthogonal designs require it to match the dimension spanned by
    the common ancestors (grand mean included).
    """
    m_count = len(batches)
    for a in range(m_count):
        for b in range(a + 1, m_count):
            if refines[a][b] or refines[b][a]:
                continue
            ca, cb = batches[a].cells, batches[b].cells
            ja, jb = batches[a].j, batches[b].j
            edges = np.unique(ca.astype(np.int64) * jb + cb)
            rows = edges // jb
            cols = edges % jb + ja
            data = np.ones(edges.size, dtype=np.int8)
            graph = coo_matrix(
                (data, (rows, cols)), shape=(ja + jb, ja + jb)
            )
            ncomp, _ = connected_components(graph, directed=False)
            common = ancestors[a] & ancestors[b]
            expected = 1 + sum(df[k] for k in common)
            if ncomp != expected:
                raise DesignError(
                    f"batches {batches[a].label!r} and {batches[b].label!r} are "
                    f"partially aliased (their spans share {ncomp} dimensions but "
                    f"only {expected} are accounted for by shared coarser batches); "
                    "such designs are rejected rather than guessed at"
                )


def build_design(batch_terms, dataset: Dataset, aliases=()) -> DesignModel:
    """Turn an ordered batch list plus observed factor levels into a design.

    Cells never observed carry no coefficient, so nesting and Latin-square
    aliasing are picked up from the data automatically; declared aliases
    are validated against it.  A per-observation residual batch is
    appended when the formula does not already provide one.
    """
    n = dataset.n
    batches = [_build_batch(dataset, t) for t in batch_terms]

    spanning = [i for i, b in enumerate(batches) if b.j == n]
    if not spanning:
        batches.append(
            Batch(RESIDUAL_LABEL, (), np.arange(n, dtype=np.int64), n,
                  np.ones(n, dtype=np.int64), None)
        )
        residual_index = len(batches) - 1
    else:
        residual_index = spanning[0]

    m_count = len(batches)
    refines = [[False] * m_count for _ in range(m_count)]
    for k in range(m_count):
        for m in range(m_count):
            if k != m:
                refines[k][m] = _refines(batches[k], batches[m])

    for a in range(m_count):
        for b in range(a + 1, m_count):
            if refines[a][b] and refines[b][a]:
                raise DesignError(
                    f"batches {batches[a].label!r} and {batches[b].label!r} span "
                    "the same space; drop one of them"
                )

    for decl in aliases:
        inner = frozenset(decl.inner)
        outer = frozenset(decl.outer)
        idx_inner = [i for i, b in enumerate(batches) if frozenset(b.factors) == inner]
        idx_outer = [i for i, b in enumerate(batches) if frozenset(b.factors) == outer]
        if not idx_inner or not idx_outer:
            raise DesignError(
                f"alias({':'.join(decl.inner)} = {':'.join(decl.outer)}) refers to a "
                "term that is not in the model"
            )
        if not refines[idx_outer[0]][idx_inner[0]]:
            raise DesignError(
                f"alias({':'.join(decl.inner)} = {':'.join(decl.outer)}) is not "
                "supported by the data: the declared span containment does not hold"
            )

    ancestors = [frozenset(k for k in range(m_count) if k != m and refines[m][k])
                 for m in range(m_count)]
    containment = [frozenset(k for k in range(m_count) if k != m and refines[k][m])
                   for m in range(m_count)]

    design = DesignModel(
        dataset=dataset,
        batches=batches,
        df=np.zeros(m_count, dtype=np.int64),
        constraint_counts=np.zeros(m_count, dtype=np.int64),
        ancestors=ancestors,
        containment=containment,
        residual_index=residual_index,
        batch_balanced=np.zeros(m_count, dtype=bool),
        balanced=False,
    )

    order = design.topo_order()
    for m in order:
        c = _exact_constraint_count(batches, ancestors, m, design.cellmap)
        if c is None:
            c = 1 + int(sum(design.df[k] for k in ancestors[m]))
        df_m = batches[m].j - c
        if df_m < 0:
            raise DesignError(
                f"batch {batches[m].label!r} has negative degrees of freedom "
                f"(J={batches[m].j}, constraints={c}); the design is partially aliased"
            )
        design.df[m] = df_m
        design.constraint_counts[m] = c

    if 1 + int(design.df.sum()) != n:
        raise DesignError(
            f"degrees of freedom do not decompose the {n} observations "
            f"(1 + {int(design.df.sum())} != {n}); the design is partially aliased "
            "or otherwise non-orthogonal"
        )

    _check_pairwise_overlap(batches, ancestors, refines, design.df)

    for m, b in enumerate(batches):
        design.batch_balanced[m] = bool(np.all(b.counts == b.counts[0]))
    design.balanced = bool(design.batch_balanced.all())
    return design


def effective_df(design: DesignModel, m: int | None) -> int:
    """Degrees of freedom of batch ``m``.

    ``m=None`` addresses the implicit grand-mean row, which is estimated
    with no linear constraints and has df 1 by convention.
    """
    if m is None:
        return 1
    return int(design.df[m])


def check_balance(design: DesignModel) -> BalanceReport:
    counts = [b.counts.copy() for b in design.batches]
    offending = None
    for m, b in enumerate(design.batches):
        if design.batch_balanced[m]:
            continue
        ref = b.counts[0]
        j = int(np.argmax(b.counts != ref))
        if b.cell_levels is not None:
            names = design.dataset.level_names
            lvl = ", ".join(
                f"{f}={names[f][b.cell_levels[j, i]]}" for i, f in enumerate(b.factors)
            )
        else:
            lvl = f"cell {j}"
        offending = (b.label, f"{lvl} has {int(b.counts[j])} observations, expected {int(ref)}")
        break
    return BalanceReport(counts, design.balanced, offending)
