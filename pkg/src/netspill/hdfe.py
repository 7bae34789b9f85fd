"""High-dimensional fixed-effect encoding and absorption.

Factors are encoded as dense group codes; absorption subtracts group means
factor by factor (alternating projections) until every factor's largest
absolute residual group mean is below tolerance for every column.  Degrees
of freedom absorbed are exact for one or two factors and a flagged lower
bound for three or more.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class ConvergenceError(RuntimeError):
    """Raised when alternating projections fail to reach tolerance.

    Carries the per-iteration trace of the worst residual group mean.
    """

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class FactorSpec:
    """One fixed-effect factor: dense group codes over the sample rows."""

    name: str
    codes: np.ndarray
    n_groups: int

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.codes, minlength=self.n_groups)


def combine_codes(*code_arrays) -> tuple[np.ndarray, int]:
    """Collapse several dense code arrays into one dense combined code.

    Codes are assigned in order of first appearance under a lexicographic
    key, so the assignment is deterministic given row order.
    """
    arrays = [np.asarray(a) for a in code_arrays]
    if len(arrays) == 1:
        uniq, codes = np.unique(arrays[0], return_inverse=True)
        return codes.astype(np.int64), int(uniq.size)
    key = arrays[0].astype(np.int64)
    for arr in arrays[1:]:
        card = int(arr.max()) + 1 if arr.size else 1
        key = key * card + arr.astype(np.int64)
    uniq, codes = np.unique(key, return_inverse=True)
    return codes.astype(np.int64), int(uniq.size)


def encode(rows: dict[str, np.ndarray], factor_keys: dict[str, tuple[str, ...]]) -> list[FactorSpec]:
    """Encode factors from named key columns.

    ``rows`` maps column name -> dense integer codes; ``factor_keys`` maps
    factor name -> the tuple of key columns it crosses.
    """
    specs = []
    for name, keys in factor_keys.items():
        for key in keys:
            if key not in rows:
                raise ValueError(f"factor {name!r} needs key column {key!r}, not present.")
        codes, n_groups = combine_codes(*(rows[k] for k in keys))
        specs.append(FactorSpec(name=name, codes=codes, n_groups=n_groups))
    return specs


def reencode(factors: list[FactorSpec], keep: np.ndarray) -> list[FactorSpec]:
    """Restrict factors to ``keep`` rows and re-densify the group codes."""
    out = []
    for f in factors:
        codes, n_groups = combine_codes(f.codes[keep])
        out.append(FactorSpec(name=f.name, codes=codes, n_groups=n_groups))
    return out


def singleton_mask(factors: list[FactorSpec], recursive: bool = True) -> np.ndarray:
    """Boolean mask of rows that sit alone in some group of some factor.

    With ``recursive=True`` dropping is repeated to a fixpoint, since
    removing a row can create new singletons in the other factors.
    """
    n = factors[0].codes.size
    dropped = np.zeros(n, dtype=bool)
    while True:
        changed = False
        active = ~dropped
        for f in factors:
            sizes = np.bincount(f.codes[active], minlength=f.n_groups)
            lone = active & (sizes[f.codes] == 1)
            if lone.any():
                dropped |= lone
                changed = True
        if not changed or not recursive:
            break
    return dropped


@dataclass
class DemeanedMatrix:
    """Within-transformed columns plus convergence bookkeeping."""

    values: np.ndarray
    iterations: int
    max_residual_mean: float
    tol: float
    trace: list[float] = field(default_factory=list)


def demean(matrix: np.ndarray, factors: list[FactorSpec], tol: float = 1e-8,
           max_iter: int = 10_000) -> DemeanedMatrix:
    """Absorb the factors from every column by iterated group demeaning.

    Convergence is declared when, for every factor and every column, the
    largest absolute group mean is at most ``tol`` times the column scale
    (root mean square of the input column, floored at 1).  A single factor
    converges in one pass exactly.
    """
    if not factors:
        raise ValueError("at least one factor is required.")
    if tol <= 0:
        raise ValueError("tol should be positive.")
    x = np.array(matrix, dtype=float, copy=True)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    for f in factors:
        if f.codes.size != n:
            raise ValueError(f"factor {f.name!r} has {f.codes.size} codes for {n} rows.")
    scale = np.maximum(np.sqrt(np.mean(x * x, axis=0)), 1.0)
    plans = [_GroupPlan(f) for f in factors]

    trace: list[float] = []
    residual = np.inf
    for _ in range(max_iter):
        worst = 0.0
        for plan in plans:
            means = plan.group_means(x)
            x -= means[plan.codes]
            worst = max(worst, float(np.abs(means / scale).max(initial=0.0)))
        trace.append(worst)
        # a single factor is exact after one pass; otherwise re-audit the
        # actual residual group means once the subtracted means are small
        if len(factors) == 1 or worst <= tol:
            residual = max(
                float(np.abs(plan.group_means(x) / scale).max(initial=0.0)) for plan in plans)
            if residual <= tol:
                break
    else:
        raise ConvergenceError(
            f"fixed-effect absorption did not reach tol={tol} in {max_iter} iterations "
            f"(last residual {trace[-1]:.3e}).", trace)
    return DemeanedMatrix(values=x, iterations=len(trace),
                          max_residual_mean=residual, tol=tol, trace=trace)


class _GroupPlan:
    """Sorted-order segment plan for fast all-column group means."""

    def __init__(self, factor: FactorSpec):
        self.codes = factor.codes
        self.order = np.argsort(factor.codes, kind="stable")
        sorted_codes = factor.codes[self.order]
        self.starts = np.flatnonzero(np.r_[True, sorted_codes[1:] != sorted_codes[:-1]])
        self.present = sorted_codes[self.starts]
        self.n_groups = factor.n_groups
        counts = np.diff(np.r_[self.starts, sorted_codes.size])
        self.inv_counts = (1.0 / counts)[:, None]

    def group_means(self, x: np.ndarray) -> np.ndarray:
        sums = np.add.reduceat(x[self.order], self.starts, axis=0) * self.inv_counts
        if self.present.size == self.n_groups:
            return sums
        means = np.zeros((self.n_groups, x.shape[1]))
        means[self.present] = sums
        return means


def absorbed_dof(factors: list[FactorSpec],
                 cluster_codes: np.ndarray | None = None) -> tuple[int, bool]:
    """Number of model parameters the absorbed factors charge against the
    sample for small-cluster corrections.

    Factors nested within the cluster grouping are excluded (their levels do
    not reduce the effective number of independent cluster scores).  Of the
    remainder: one factor costs its group count; two cost groups_1 +
    groups_2 minus the number of connected components of the bipartite group
    graph; three or more use a pairwise lower bound, flagged as approximate
    in the second return value.
    """
    if cluster_codes is not None:
        factors = [f for f in factors if not _nested_in(f, cluster_codes)]
    if not factors:
        return 0, False
    if len(factors) == 1:
        return factors[0].n_groups, False
    total = factors[0].n_groups
    exact = len(factors) == 2
    for f in factors[1:]:
        total += f.n_groups - _bipartite_components(factors[0], f)
    return total, not exact


def _nested_in(factor: FactorSpec, cluster_codes: np.ndarray) -> bool:
    """True when every group of the factor lies inside a single cluster."""
    first = np.full(factor.n_groups, -1, dtype=np.int64)
    np.maximum.at(first, factor.codes, cluster_codes)
    return bool(np.all(cluster_codes == first[factor.codes]))


def _bipartite_components(a: FactorSpec, b: FactorSpec) -> int:
    graph = sp.coo_matrix(
        (np.ones(a.codes.size), (a.codes, b.codes)), shape=(a.n_groups, b.n_groups)
    )
    full = sp.bmat([[None, graph], [graph.T, None]])
    n_comp, _ = connected_components(full, directed=False)
    return int(n_comp)
