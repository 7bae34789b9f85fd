"""Directed production network: construction, stable-link filtering, and
first/second-order neighbor queries.

Edges point from supplier to customer.  Side ``"D"`` (downstream exposure)
refers to a firm's suppliers, side ``"U"`` (upstream exposure) to its
customers.  Second-order exclusive sets are the two-step neighbors on one
side purged of the firm itself and of every first-order peer; in strict
mode the three cross-path sets (suppliers of customers, customers of
suppliers, and the opposite side's two-step set) are removed as well.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

DOWNSTREAM = "D"
UPSTREAM = "U"

EDGE_CSV_COLUMNS = ("supplier_id", "customer_id", "year", "value")


def _check_side(side: str) -> str:
    if side not in (DOWNSTREAM, UPSTREAM):
        raise ValueError(f"side should be '{DOWNSTREAM}' or '{UPSTREAM}', got {side!r}.")
    return side


class ProductionNetwork:
    """Immutable directed graph over a dense firm index 0..n-1.

    Neighbor lists are stored sorted in CSR form, once for each direction,
    so that forward (customers) and reverse (suppliers) queries are O(degree)
    and deterministic.  Edge values, when present, are carried on both
    representations.

    Parameters
    ----------
    n : int
        Number of firms.
    suppliers, customers : ndarray
        Parallel arrays defining edges supplier -> customer (dense indices).
    values : ndarray, optional
        Per-edge weights (e.g. trade values).  Used by value-weighted shares.
    firm_labels : ndarray, optional
        External identifiers, position i labels firm i.
    """

    def __init__(self, n, suppliers, customers, values=None, firm_labels=None):
        suppliers = np.asarray(suppliers, dtype=np.int64)
        customers = np.asarray(customers, dtype=np.int64)
        if suppliers.shape != customers.shape:
            raise ValueError("suppliers and customers should have equal length.")
        if suppliers.size:
            if suppliers.min() < 0 or customers.min() < 0:
                raise ValueError("negative firm index in edge list.")
            if max(suppliers.max(), customers.max()) >= n:
                raise ValueError("firm index out of range in edge list.")
        if np.any(suppliers == customers):
            raise ValueError("self-loops are not allowed in a ProductionNetwork.")
        data = np.ones(suppliers.size) if values is None else np.asarray(values, dtype=float)
        adj = sp.csr_matrix((data, (suppliers, customers)), shape=(n, n))
        adj.sum_duplicates()
        if adj.nnz != suppliers.size:
            raise ValueError("duplicate edges are not allowed in a ProductionNetwork.")
        adj.sort_indices()
        radj = adj.T.tocsr()
        radj.sort_indices()

        self.n = int(n)
        self.firm_labels = None if firm_labels is None else np.asarray(firm_labels)
        self._fwd = adj
        self._rev = radj
        self._has_values = values is not None
        self._second_order_cache: dict[tuple[str, bool], sp.csr_matrix] = {}

    @property
    def edge_count(self) -> int:
        return self._fwd.nnz

    @property
    def has_values(self) -> bool:
        return self._has_values

    @property
    def out_degrees(self) -> np.ndarray:
        """d_i^+ : number of customers of each firm."""
        return np.diff(self._fwd.indptr)

    @property
    def in_degrees(self) -> np.ndarray:
        """d_i^- : number of suppliers of each firm."""
        return np.diff(self._rev.indptr)

    def adjacency(self, weighted: bool = False) -> sp.csr_matrix:
        """CSR adjacency with A[u, v] != 0 iff u supplies v."""
        adj = self._fwd.copy()
        if not weighted:
            adj.data = np.ones_like(adj.data)
        return adj

    def side_matrix(self, side: str, weighted: bool = False) -> sp.csr_matrix:
        """CSR matrix whose row i holds the side peers of firm i."""
        _check_side(side)
        mat = (self._rev if side == DOWNSTREAM else self._fwd).copy()
        if not weighted:
            mat.data = np.ones_like(mat.data)
        return mat

    def _row(self, mat, i):
        if not 0 <= i < self.n:
            raise IndexError(f"firm index {i} out of range for n={self.n}.")
        return mat.indices[mat.indptr[i]:mat.indptr[i + 1]]

    def suppliers(self, i: int) -> np.ndarray:
        """Sorted suppliers N_i^- of firm i."""
        return self._row(self._rev, i)

    def customers(self, i: int) -> np.ndarray:
        """Sorted customers N_i^+ of firm i."""
        return self._row(self._fwd, i)

    def neighbors(self, i: int, side: str) -> np.ndarray:
        """Side peers of firm i: suppliers for side 'D', customers for side 'U'."""
        _check_side(side)
        return self.suppliers(i) if side == DOWNSTREAM else self.customers(i)

    def second_order_exclusive(self, i: int, side: str, strict: bool = True) -> np.ndarray:
        """Two-step same-direction neighbors of i purged of first-order peers.

        For side 'U' these are customers of customers of i, minus i itself,
        minus N_i^- and N_i^+; with ``strict`` additionally minus suppliers
        of customers, customers of suppliers, and suppliers of suppliers.
        Side 'D' is the mirror image.  The result is sorted.
        """
        _check_side(side)
        first = self._fwd if side == UPSTREAM else self._rev
        two_step: set[int] = set()
        for j in self._row(first, i):
            two_step.update(self._row(first, j))
        excluded = {i}
        excluded.update(self.suppliers(i))
        excluded.update(self.customers(i))
        if strict:
            for j in self.customers(i):
                excluded.update(self.suppliers(j))
            for j in self.suppliers(i):
                excluded.update(self.customers(j))
            opposite = self._rev if side == UPSTREAM else self._fwd
            for j in self._row(opposite, i):
                excluded.update(self._row(opposite, j))
        return np.array(sorted(two_step - excluded), dtype=np.int64)

    def second_order_matrix(self, side: str, strict: bool = True) -> sp.csr_matrix:
        """Boolean CSR matrix whose row i is second_order_exclusive(i, side, strict).

        Built once per (side, strict) with sparse products and cached; the
        per-firm query above is the local-set reference used to cross-check it.
        """
        _check_side(side)
        key = (side, strict)
        if key not in self._second_order_cache:
            fwd = self.adjacency()
            rev = fwd.T.tocsr()
            fwd2 = _binary(fwd @ fwd)
            base = fwd2 if side == UPSTREAM else fwd2.T.tocsr()
            mask = _binary(
                sp.eye(self.n, format="csr") + fwd + rev
                + (fwd @ rev if strict else 0) + (rev @ fwd if strict else 0)
                + ((fwd2.T if side == UPSTREAM else fwd2) if strict else 0)
            )
            out = base - base.multiply(mask)
            out.eliminate_zeros()
            out.sort_indices()
            self._second_order_cache[key] = out
        return self._second_order_cache[key]


def _binary(mat) -> sp.csr_matrix:
    mat = sp.csr_matrix(mat)
    mat.data = np.ones_like(mat.data)
    return mat


@dataclass
class EdgePanel:
    """Per-year deduplicated edge sets on a dense firm index.

    ``suppliers``, ``customers``, ``years`` and ``values`` are parallel
    arrays with one entry per (supplier, customer, year) record after
    deduplication.  ``firm_labels[i]`` is the external id of firm i.
    """

    n: int
    firm_labels: np.ndarray
    suppliers: np.ndarray
    customers: np.ndarray
    years: np.ndarray
    values: np.ndarray | None
    self_loops_dropped: int = 0
    below_threshold_dropped: int = 0
    duplicates_merged: int = 0

    @property
    def year_range(self) -> tuple[int, int]:
        return int(self.years.min()), int(self.years.max())


def build_edge_panel(suppliers, customers, years, values=None, *, min_value=None) -> EdgePanel:
    """Assemble yearly edge sets from raw transaction records.

    Records with supplier == customer are dropped (counted), duplicate
    (supplier, customer, year) records are merged with values summed, and
    when values are present records below ``min_value`` are dropped.  The
    boundary is inclusive: value >= min_value is kept.
    """
    sup = np.asarray(suppliers)
    cus = np.asarray(customers)
    yrs = np.asarray(years, dtype=np.int64)
    if not (sup.shape == cus.shape == yrs.shape):
        raise ValueError("suppliers, customers and years should have equal length.")
    if yrs.size == 0:
        raise ValueError("no edge records supplied.")
    uniq_years = np.unique(yrs)
    if not np.array_equal(uniq_years, np.arange(uniq_years[0], uniq_years[-1] + 1)):
        raise ValueError(f"years should form a contiguous range, got {uniq_years.tolist()}.")

    labels, codes = np.unique(np.concatenate([sup, cus]), return_inverse=True)
    sup_c = codes[: sup.size]
    cus_c = codes[sup.size:]
    vals = None if values is None else np.asarray(values, dtype=float)
    if vals is not None and np.any(vals < 0):
        raise ValueError("edge values should be nonnegative.")

    loops = sup_c == cus_c
    n_loops = int(loops.sum())
    if n_loops:
        warnings.warn(f"dropped {n_loops} self-loop edge record(s).")
        keep = ~loops
        sup_c, cus_c, yrs = sup_c[keep], cus_c[keep], yrs[keep]
        if vals is not None:
            vals = vals[keep]

    n = labels.size
    key = (yrs.astype(np.int64) * n + sup_c) * n + cus_c
    order = np.argsort(key, kind="stable")
    key = key[order]
    uniq_key, start = np.unique(key, return_index=True)
    merged = key.size - uniq_key.size
    yrs_u = yrs[order][start]
    sup_u = sup_c[order][start]
    cus_u = cus_c[order][start]
    vals_u = None
    if vals is not None:
        vals_u = np.add.reduceat(vals[order], start)

    below = 0
    if min_value is not None and vals_u is not None:
        keep = vals_u >= min_value
        below = int((~keep).sum())
        sup_u, cus_u, yrs_u, vals_u = sup_u[keep], cus_u[keep], yrs_u[keep], vals_u[keep]

    return EdgePanel(
        n=n, firm_labels=labels, suppliers=sup_u, customers=cus_u, years=yrs_u,
        values=vals_u, self_loops_dropped=n_loops,
        below_threshold_dropped=below, duplicates_merged=merged,
    )


def read_edge_csv(path, *, min_value=None) -> EdgePanel:
    """Read an edge CSV (columns supplier_id, customer_id, year[, value]).

    The header is required.  Rows with missing ids or non-numeric
    year/value fields are rejected with their 1-based file line number.
    """
    frame = pd.read_csv(path, dtype=str)
    required = ["supplier_id", "customer_id", "year"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: missing required column(s) {missing}.")
    for col in required:
        bad = frame.index[frame[col].isna() | (frame[col].str.strip() == "")]
        if bad.size:
            raise ValueError(f"{path}: malformed record at line {bad[0] + 2} (empty {col}).")
    years = pd.to_numeric(frame["year"], errors="coerce")
    bad = frame.index[years.isna()]
    if bad.size:
        raise ValueError(f"{path}: malformed record at line {bad[0] + 2} (non-numeric year).")
    values = None
    if "value" in frame.columns:
        values = pd.to_numeric(frame["value"], errors="coerce")
        bad = frame.index[values.isna() & frame["value"].notna()]
        if bad.size:
            raise ValueError(f"{path}: malformed record at line {bad[0] + 2} (non-numeric value).")
        values = values.to_numpy(dtype=float)
        if np.isnan(values).any():
            raise ValueError(f"{path}: malformed record at line "
                             f"{int(np.flatnonzero(np.isnan(values))[0]) + 2} (missing value).")
    return build_edge_panel(
        frame["supplier_id"].to_numpy(), frame["customer_id"].to_numpy(),
        years.to_numpy(dtype=np.int64), values, min_value=min_value,
    )


@dataclass
class StableReport:
    """Bookkeeping from stable-link filtering."""

    window: tuple[int, int]
    presence_required: int
    kept_edges: int
    dropped_edges: int
    value_share_dropped: float | None = None


def stable_network(panel: EdgePanel, window: tuple[int, int], max_gap: int = 1,
                   keep_values: bool = True) -> tuple[ProductionNetwork, StableReport]:
    """Reduce yearly edge sets to one time-invariant network of stable links.

    An edge is kept when it is present in at least ``len(window) - max_gap``
    of the window years (a single missing year is treated as imputed when
    ``max_gap=1``).  Edge weight on the result is the mean of the values
    observed inside the window.  Raises if no edge survives.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi <= lo:
        raise ValueError("window should span at least 2 years.")
    n_years = hi - lo + 1
    if not 0 <= max_gap < n_years:
        raise ValueError("max_gap should be in [0, window length).")
    in_window = (panel.years >= lo) & (panel.years <= hi)
    sup = panel.suppliers[in_window]
    cus = panel.customers[in_window]
    vals = None if panel.values is None else panel.values[in_window]

    key = sup.astype(np.int64) * panel.n + cus
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    required = n_years - max_gap
    keep = counts >= required
    kept = int(keep.sum())
    if kept == 0:
        raise ValueError("stable-link filter produced an empty network; "
                         "loosen max_gap or check the window.")
    report = StableReport(window=(lo, hi), presence_required=required,
                          kept_edges=kept, dropped_edges=int(uniq.size - kept))
    mean_vals = None
    if vals is not None:
        totals = np.bincount(inverse, weights=vals, minlength=uniq.size)
        grand = totals.sum()
        report.value_share_dropped = float(totals[~keep].sum() / grand) if grand > 0 else 0.0
        if keep_values:
            mean_vals = totals[keep] / counts[keep]
    return ProductionNetwork(
        panel.n, uniq[keep] // panel.n, uniq[keep] % panel.n,
        values=mean_vals, firm_labels=panel.firm_labels,
    ), report


def write_id_map(path, firm_labels) -> None:
    """Emit the external-id -> dense-index map as a two-column CSV."""
    pd.DataFrame({"firm_id": firm_labels, "index": np.arange(len(firm_labels))}).to_csv(
        path, index=False)
