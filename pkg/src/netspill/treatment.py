"""Network-derived regressors and design-matrix assembly.

All share quantities are ratios of an integer numerator (count of importing
peers, possibly restricted to a category) to the firm's side degree.  The
numerators are carried alongside the float columns so that partition
identities (category shares summing to the total share) can be verified in
exact integer arithmetic; float division is applied only when materializing
regression columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import DOWNSTREAM, UPSTREAM, ProductionNetwork
from .panel import CONTROL_NAMES, ORIGINS, AttributeTable, ObservationPanel, StatusPanel

SIDES = (DOWNSTREAM, UPSTREAM)
LINK_PREDICATES = ("same_industry", "same_zip", "same_province", "reciprocal")


# ---------------------------------------------------------------------------
# bulk share computations (vectorized over a (n, m) block of status columns)

def peer_share_block(net: ProductionNetwork, status_block: np.ndarray, side: str,
                     weights: str = "uniform") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Side-peer importing shares for every firm and status column.

    Returns ``(shares, numerators, available)``: with uniform weights the
    numerator is the count of importing side peers and the denominator the
    side degree; with value weights the share is value-weighted and the
    numerator is the weighted sum.  ``available`` marks firms with at least
    one (positively weighted) side peer; shares are 0 there and flagged.
    """
    if weights not in ("uniform", "value"):
        raise ValueError(f"weights should be 'uniform' or 'value', got {weights!r}.")
    if weights == "value" and not net.has_values:
        raise ValueError("value weighting requested but the network carries no edge values.")
    mat = net.side_matrix(side, weighted=weights == "value")
    block = np.asarray(status_block, dtype=float)
    squeeze = block.ndim == 1
    if squeeze:
        block = block[:, None]
    numer = mat @ block
    denom = np.asarray(mat.sum(axis=1)).ravel()
    available = denom > 0
    shares = np.zeros_like(numer)
    shares[available] = numer[available] / denom[available, None]
    if squeeze:
        return shares[:, 0], numer[:, 0], available
    return shares, numer, available


def instrument_share_block(net: ProductionNetwork, status_block: np.ndarray, side: str,
                           strict: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Importing shares over the second-order exclusive sets."""
    mat = net.second_order_matrix(side, strict)
    block = np.asarray(status_block, dtype=float)
    squeeze = block.ndim == 1
    if squeeze:
        block = block[:, None]
    numer = mat @ block
    sizes = np.diff(mat.indptr).astype(float)
    available = sizes > 0
    shares = np.zeros_like(numer)
    shares[available] = numer[available] / sizes[available, None]
    if squeeze:
        return shares[:, 0], numer[:, 0], available
    return shares, numer, available


def contextual_average_block(net: ProductionNetwork, value_block: np.ndarray,
                             side: str) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted side-peer averages of firm-level values."""
    mat = net.side_matrix(side)
    block = np.asarray(value_block, dtype=float)
    squeeze = block.ndim == 1
    if squeeze:
        block = block[:, None]
    sums = mat @ block
    deg = np.asarray(mat.sum(axis=1)).ravel()
    available = deg > 0
    out = np.zeros_like(sums)
    out[available] = sums[available] / deg[available, None]
    if squeeze:
        return out[:, 0], available
    return out, available


def category_share_block(net: ProductionNetwork, status_block: np.ndarray, side: str,
                         member: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Importing-peer counts inside/outside a firm-level category.

    ``member`` flags each firm's category (e.g. High).  Both counts are
    divided by the total side degree, so the two shares sum to the overall
    peer share with an identical denominator.  Returns
    ``(numer_in, numer_out, degree)`` as integer-valued arrays.
    """
    mat = net.side_matrix(side)
    block = np.asarray(status_block, dtype=float)
    squeeze = block.ndim == 1
    if squeeze:
        block = block[:, None]
    member = np.asarray(member, dtype=float)
    numer_in = mat @ (block * member[:, None])
    numer_all = mat @ block
    numer_out = numer_all - numer_in
    degree = np.asarray(mat.sum(axis=1)).ravel()
    if squeeze:
        return numer_in[:, 0], numer_out[:, 0], degree
    return numer_in, numer_out, degree


def link_flags(net: ProductionNetwork, side: str, predicate: str,
               attrs: AttributeTable | None = None,
               province_prefix: int = 2) -> np.ndarray:
    """Per-edge booleans on the side CSR for a link-level predicate."""
    if predicate not in LINK_PREDICATES:
        raise ValueError(f"predicate should be one of {LINK_PREDICATES}, got {predicate!r}.")
    mat = net.side_matrix(side)
    owner = np.repeat(np.arange(net.n), np.diff(mat.indptr))
    peer = mat.indices
    if predicate == "reciprocal":
        fwd = net.adjacency()
        f_owner = np.repeat(np.arange(net.n), np.diff(fwd.indptr))
        keys = np.sort(f_owner * net.n + fwd.indices)
        if keys.size == 0:
            return np.zeros(peer.size, dtype=bool)
        if side == DOWNSTREAM:           # edge peer->owner exists; check owner->peer
            probe = owner.astype(np.int64) * net.n + peer
        else:                            # edge owner->peer exists; check peer->owner
            probe = peer.astype(np.int64) * net.n + owner
        pos = np.searchsorted(keys, probe)
        pos = np.minimum(pos, keys.size - 1)
        return keys[pos] == probe
    if attrs is None:
        raise ValueError(f"predicate {predicate!r} needs an attribute table.")
    if predicate == "same_industry":
        codes = attrs.industry_codes
    elif predicate == "same_zip":
        codes = attrs.zip_codes
    else:
        codes = attrs.province_codes(province_prefix)
    return codes[owner] == codes[peer]


def link_category_share_block(net: ProductionNetwork, status_block: np.ndarray, side: str,
                              edge_member: np.ndarray
                              ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Importing-peer counts over a per-edge predicate partition."""
    mat = net.side_matrix(side)
    block = np.asarray(status_block, dtype=float)
    squeeze = block.ndim == 1
    if squeeze:
        block = block[:, None]
    masked = mat.copy()
    masked.data = edge_member.astype(float)
    numer_in = masked @ block
    numer_all = mat @ block
    numer_out = numer_all - numer_in
    degree = np.asarray(mat.sum(axis=1)).ravel()
    if squeeze:
        return numer_in[:, 0], numer_out[:, 0], degree
    return numer_in, numer_out, degree


def spatial_proportion_block(cell_codes: np.ndarray, status_vec: np.ndarray
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Share of importing firms in each firm's cell, excluding the firm
    itself from numerator and denominator.  Lone firms get 0 and a flag."""
    cell_codes = np.asarray(cell_codes)
    status_vec = np.asarray(status_vec, dtype=float)
    n_cells = int(cell_codes.max()) + 1 if cell_codes.size else 1
    totals = np.bincount(cell_codes, minlength=n_cells).astype(float)
    importers = np.bincount(cell_codes, weights=status_vec, minlength=n_cells)
    denom = totals[cell_codes] - 1.0
    numer = importers[cell_codes] - status_vec
    alone = denom <= 0
    out = np.zeros(cell_codes.size)
    out[~alone] = numer[~alone] / denom[~alone]
    return out, alone


# ---------------------------------------------------------------------------
# scalar contract forms (single firm-origin-year queries)

def _status_vector(status: StatusPanel, origin, year: int) -> np.ndarray:
    if origin == "pooled":
        return status.pooled()[:, status.year_index(year)].astype(float)
    c = ORIGINS.index(origin) if isinstance(origin, str) else int(origin)
    return status.statuses[:, status.year_index(year), c].astype(float)


def peer_share(net: ProductionNetwork, status: StatusPanel, i: int, origin, year: int,
               side: str, weights: str = "uniform") -> tuple[float, bool]:
    """Share of side peers of i importing from the origin at ``year - 1``.

    Returns (share, available); ``available`` is False when the firm has no
    side peers, in which case the share is 0 and the row is excluded
    downstream.
    """
    vec = _status_vector(status, origin, year - 1)
    peers = net.neighbors(i, side)
    if weights == "uniform":
        if peers.size == 0:
            return 0.0, False
        return float(vec[peers].sum() / peers.size), True
    if weights != "value":
        raise ValueError(f"weights should be 'uniform' or 'value', got {weights!r}.")
    mat = net.side_matrix(side, weighted=True)
    w = mat.data[mat.indptr[i]:mat.indptr[i + 1]]
    total = w.sum()
    if total <= 0:
        return 0.0, False
    return float((w * vec[peers]).sum() / total), True


def instrument_share(net: ProductionNetwork, status: StatusPanel, i: int, origin,
                     year: int, side: str, lag: int = 2,
                     strict: bool = True) -> tuple[float, bool]:
    """Share of the second-order exclusive set importing at ``year - lag``."""
    if lag not in (2, 3):
        raise ValueError(f"instrument lag should be 2 or 3, got {lag}.")
    vec = _status_vector(status, origin, year - lag)
    members = net.second_order_exclusive(i, side, strict)
    if members.size == 0:
        return 0.0, False
    return float(vec[members].sum() / members.size), True


@dataclass
class SpatialSpillovers:
    """Lagged importer proportions among zip / industry / industry-zip peers."""

    prop_imp_zip: float
    prop_imp_sec: float
    prop_imp_sec_zip: float
    flags: dict[str, bool]


def spatial_props(attrs: AttributeTable, status: StatusPanel, i: int, origin,
                  year: int) -> SpatialSpillovers:
    vec = _status_vector(status, origin, year - 1)
    out = {}
    flags = {}
    cells = {
        "prop_imp_zip": attrs.zip_codes,
        "prop_imp_sec": attrs.industry_codes,
        "prop_imp_sec_zip": _cross_codes(attrs.industry_codes, attrs.zip_codes),
    }
    for name, codes in cells.items():
        values, alone = spatial_proportion_block(codes, vec)
        out[name] = float(values[i])
        flags[name] = bool(alone[i])
    return SpatialSpillovers(out["prop_imp_zip"], out["prop_imp_sec"],
                             out["prop_imp_sec_zip"], flags)


def _cross_codes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    key = a.astype(np.int64) * (int(b.max()) + 1) + b
    _, codes = np.unique(key, return_inverse=True)
    return codes.astype(np.int64)


def category_shares(net: ProductionNetwork, status: StatusPanel, category: np.ndarray,
                    i: int, origin, year: int, side: str,
                    level: str | None = None) -> dict[str, float]:
    """Per-category importing-peer shares over the total side degree.

    ``category`` is either a firm-level boolean array (High membership,
    ``level="firm"``) or a per-edge boolean array aligned with the side CSR
    (link predicate, ``level="link"``); the level is inferred from the array
    size when unambiguous.  Returns {"in": share, "out": share}; the two sum
    to the overall peer share through a common integer numerator partition.
    """
    vec = _status_vector(status, origin, year - 1)
    category = np.asarray(category)
    nnz = net.side_matrix(side).nnz
    if level is None:
        if category.size == net.n and category.size != nnz:
            level = "firm"
        elif category.size == nnz and category.size != net.n:
            level = "link"
        else:
            raise ValueError("category size matches both firms and edges; "
                             "pass level='firm' or level='link'.")
    if level == "firm":
        numer_in, numer_out, deg = category_share_block(net, vec, side, category)
    elif level == "link":
        numer_in, numer_out, deg = link_category_share_block(net, vec, side, category)
    else:
        raise ValueError(f"level should be 'firm' or 'link', got {level!r}.")
    if deg[i] == 0:
        return {"in": 0.0, "out": 0.0}
    return {"in": float(numer_in[i] / deg[i]), "out": float(numer_out[i] / deg[i])}


# ---------------------------------------------------------------------------
# specification catalogue and design assembly

@dataclass(frozen=True)
class DesignSpec:
    """One estimation specification: treatment layout, fixed effects,
    clustering, and instrument lags."""

    name: str
    characteristic: str | None = None
    predicate: str | None = None
    weights: str = "uniform"
    strict_instruments: bool = True
    province_prefix: int = 2
    factors: tuple[str, ...] | None = None

    def resolve(self) -> dict:
        if self.name not in SPEC_TABLE:
            raise ValueError(f"unknown specification {self.name!r}; "
                             f"known: {sorted(SPEC_TABLE)}.")
        plan = dict(SPEC_TABLE[self.name])
        if self.factors is not None:
            plan["factors"] = tuple(self.factors)
        for f in plan["factors"]:
            if f not in FACTOR_KEYS:
                raise ValueError(f"unknown factor {f!r}; known: {sorted(FACTOR_KEYS)}.")
        if plan["mode"] == "pooled":
            bad = [f for f in plan["factors"] if {"firm", "year"} <= set(FACTOR_KEYS[f])]
            if bad:
                raise ValueError(
                    f"pooled specifications cannot absorb firm-by-year factors {bad}: "
                    "they would absorb all outcome variation.")
            bad = [f for f in plan["factors"] if "origin" in FACTOR_KEYS[f]]
            if bad:
                raise ValueError(f"pooled specifications have no origin dimension; "
                                 f"remove factor(s) {bad}.")
        if plan.get("heterogeneity") in ("h1", "h2", "h3") and not self.characteristic:
            raise ValueError(f"specification {self.name!r} needs a characteristic.")
        if plan.get("heterogeneity") == "h4" and not self.predicate:
            raise ValueError(f"specification {self.name!r} needs a link predicate.")
        if plan.get("heterogeneity") in ("h2", "h3", "h4") and self.weights == "value":
            raise ValueError("category-share specifications use uniform weighting; "
                             "value weights would break the count partition.")
        return plan


FACTOR_KEYS = {
    "id": ("firm",),
    "id-y": ("firm", "year"),
    "eu-y": ("origin", "year"),
    "s-z-y": ("industry", "zip", "year"),
    "eu-s-z-y": ("origin", "industry", "zip", "year"),
}

CLUSTER_KEYS = {"id": ("firm",), "id-y": ("firm", "year")}

_C5 = dict(mode="per-origin", factors=("id-y", "eu-s-z-y"), cluster="id-y",
           controls=False, spatial=False, iv=(), heterogeneity=None)

SPEC_TABLE = {
    "s1-col1": dict(_C5, factors=("id", "eu-y"), cluster="id"),
    "s1-col2": dict(_C5, factors=("id", "eu-y"), cluster="id", controls=True),
    "s1-col3": dict(_C5, factors=("id-y", "eu-y")),
    "s1-col4": dict(_C5, factors=("id-y", "eu-y"), spatial=True),
    "s1-col5": dict(_C5),
    "s1-col6": dict(_C5, mode="pooled", factors=("id", "s-z-y"), cluster="id",
                    controls=True),
    "iv-t2": dict(_C5, iv=(2,)),
    "iv-t23": dict(_C5, iv=(2, 3)),
    "iv-pooled-t2": dict(_C5, mode="pooled", factors=("id", "s-z-y"), cluster="id",
                         controls=True, iv=(2,)),
    "iv-pooled-t23": dict(_C5, mode="pooled", factors=("id", "s-z-y"), cluster="id",
                          controls=True, iv=(2, 3)),
    "h1": dict(_C5, heterogeneity="h1"),
    "h2": dict(_C5, heterogeneity="h2"),
    "h3": dict(_C5, heterogeneity="h3"),
    "h4": dict(_C5, heterogeneity="h4"),
}


@dataclass
class Design:
    """Assembled regression inputs plus the row-drop ledger."""

    spec: DesignSpec
    plan: dict
    y: np.ndarray
    x: np.ndarray
    x_labels: list[str]
    z: np.ndarray
    z_labels: list[str]
    n_endogenous: int
    row_keys: dict[str, np.ndarray]
    cluster_name: str
    factor_names: tuple[str, ...]
    drop_ledger: dict[str, int]
    rows_initial: int
    rows: ObservationPanel | None = None
    partition_audits: list[dict] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.y.size


def _gather(block_by_origin, rows: ObservationPanel, lag: int):
    """Pick (firm, year_idx - lag[, origin]) entries out of (n, T) blocks."""
    t = rows.year_idx - lag
    if isinstance(block_by_origin, tuple) or isinstance(block_by_origin, list):
        out = np.empty(rows.n_rows)
        for c, block in enumerate(block_by_origin):
            mask = rows.origin == c
            out[mask] = block[rows.firm[mask], t[mask]]
        return out
    return block_by_origin[rows.firm, t]


def build_design(rows: ObservationPanel, net: ProductionNetwork, status: StatusPanel,
                 attrs: AttributeTable, spec: DesignSpec, split=None) -> Design:
    """Assemble outcome, regressor, and instrument columns for one spec.

    Rows whose required fields are structurally missing (no peers on a side,
    empty second-order sets, insufficient lag history, absent attributes)
    are dropped in a fixed order and counted in the drop ledger.
    """
    plan = spec.resolve()
    if rows.mode != plan["mode"]:
        raise ValueError(f"specification {spec.name!r} expects {plan['mode']} rows, "
                         f"got {rows.mode}.")
    ledger: dict[str, int] = {}
    rows_initial = rows.n_rows

    def drop(keep: np.ndarray, reason: str):
        nonlocal rows
        n_drop = int((~keep).sum())
        if n_drop:
            rows = rows.subset(keep)
        ledger[reason] = n_drop

    # statuses laid out per origin as (n, T) blocks
    if plan["mode"] == "pooled":
        blocks = [status.pooled().astype(float)]
    else:
        blocks = [status.statuses[:, :, c].astype(float) for c in range(2)]

    in_deg = net.in_degrees
    out_deg = net.out_degrees
    if spec.weights == "value":
        has_d = np.asarray(net.side_matrix(DOWNSTREAM, weighted=True).sum(axis=1)).ravel() > 0
        has_u = np.asarray(net.side_matrix(UPSTREAM, weighted=True).sum(axis=1)).ravel() > 0
    else:
        has_d = in_deg > 0
        has_u = out_deg > 0
    drop(has_d[rows.firm], "no_suppliers")
    drop(has_u[rows.firm], "no_customers")

    needs_attrs = (plan["controls"] or plan["spatial"] or plan["heterogeneity"]
                   or any("zip" in FACTOR_KEYS[f] or "industry" in FACTOR_KEYS[f]
                          for f in plan["factors"]))
    if needs_attrs and attrs.missing_firms.size:
        ok = ~np.isin(rows.firm, attrs.missing_firms)
        drop(ok, "missing_attributes")
    else:
        ledger["missing_attributes"] = 0

    if plan["iv"]:
        max_lag = max(plan["iv"])
        drop(rows.year_idx >= max_lag, "insufficient_lag")
        so_d = np.diff(net.second_order_matrix(DOWNSTREAM, spec.strict_instruments).indptr) > 0
        so_u = np.diff(net.second_order_matrix(UPSTREAM, spec.strict_instruments).indptr) > 0
        drop(so_d[rows.firm], "no_second_order_suppliers")
        drop(so_u[rows.firm], "no_second_order_customers")

    labels: list[str] = []
    columns: list[np.ndarray] = []
    audits: list[dict] = []

    share_d, numer_d, _ = peer_share_block(net, np.hstack(blocks), DOWNSTREAM, spec.weights)
    share_u, numer_u, _ = peer_share_block(net, np.hstack(blocks), UPSTREAM, spec.weights)
    n_years = status.years.size
    per_origin = [share_d[:, c * n_years:(c + 1) * n_years] for c in range(len(blocks))]
    ybar_d = _gather(per_origin, rows, 1)
    per_origin_u = [share_u[:, c * n_years:(c + 1) * n_years] for c in range(len(blocks))]
    ybar_u = _gather(per_origin_u, rows, 1)

    het = plan["heterogeneity"]
    if het is None:
        labels += ["ybar_D_t1", "ybar_U_t1"]
        columns += [ybar_d, ybar_u]
    else:
        h_cols, h_labels, h_audits = _heterogeneity_columns(
            rows, net, attrs, blocks, n_years, spec, het, split,
            {"D": (ybar_d, numer_d), "U": (ybar_u, numer_u)})
        labels += h_labels
        columns += h_cols
        audits += h_audits

    if plan["spatial"]:
        for name, col in _spatial_columns(rows, attrs, blocks, n_years).items():
            labels.append(name)
            columns.append(col)

    if plan["controls"]:
        c_cols, c_labels = _control_columns(rows, net, attrs)
        labels += c_labels
        columns += c_cols

    z_labels: list[str] = []
    z_cols: list[np.ndarray] = []
    if plan["iv"]:
        inst = {}
        for side, tag in ((DOWNSTREAM, "D"), (UPSTREAM, "U")):
            sh, _, _ = instrument_share_block(net, np.hstack(blocks), side,
                                              spec.strict_instruments)
            inst[tag] = [sh[:, c * n_years:(c + 1) * n_years] for c in range(len(blocks))]
        for lag in plan["iv"]:
            for tag in ("D", "U"):
                z_labels.append(f"ybar2_{tag}_t{lag}")
                z_cols.append(_gather(inst[tag], rows, lag))

    x = np.column_stack(columns) if columns else np.empty((rows.n_rows, 0))
    z = np.column_stack(z_cols) if z_cols else np.empty((rows.n_rows, 0))
    n_endog = 2 if plan["iv"] else 0

    row_keys = {
        "firm": rows.firm,
        "year": rows.year_idx,
        "origin": rows.origin,
        "industry": attrs.industry_codes[rows.firm],
        "zip": attrs.zip_codes[rows.firm],
    }
    return Design(
        spec=spec, plan=plan, y=rows.y.astype(float), x=x, x_labels=labels,
        z=z, z_labels=z_labels, n_endogenous=n_endog, row_keys=row_keys,
        cluster_name=plan["cluster"], factor_names=plan["factors"],
        drop_ledger=ledger, rows_initial=rows_initial, rows=rows,
        partition_audits=audits,
    )


def _heterogeneity_columns(rows, net, attrs, blocks, n_years, spec, het, split,
                           overall):
    """Columns for the H1-H4 treatment layouts plus exact partition audits."""
    cols, labels, audits = [], [], []
    if het in ("h1", "h2", "h3") and split is None:
        raise ValueError(f"{het} needs a median split for the firm characteristic.")
    for side, tag in ((DOWNSTREAM, "D"), (UPSTREAM, "U")):
        ybar = overall[tag][0]
        if het == "h1":
            z_high = split.high[rows.firm].astype(float)
            labels += [f"ybar_{tag}_t1:low", f"ybar_{tag}_t1:high"]
            cols += [ybar * (1 - z_high), ybar * z_high]
            continue
        if het in ("h2", "h3"):
            member = split.high
            numer_in, numer_out, deg = category_share_block(
                net, np.hstack(blocks), side, member)
            in_name, out_name = "high", "low"
        else:
            edge_member = link_flags(net, side, spec.predicate, attrs,
                                     spec.province_prefix)
            numer_in, numer_out, deg = link_category_share_block(
                net, np.hstack(blocks), side, edge_member)
            in_name, out_name = "yes", "no"
        per_in = [numer_in[:, c * n_years:(c + 1) * n_years] for c in range(len(blocks))]
        per_out = [numer_out[:, c * n_years:(c + 1) * n_years] for c in range(len(blocks))]
        cnt_in = _gather(per_in, rows, 1)
        cnt_out = _gather(per_out, rows, 1)
        degree = deg[rows.firm]
        share_in = np.where(degree > 0, cnt_in / np.maximum(degree, 1), 0.0)
        share_out = np.where(degree > 0, cnt_out / np.maximum(degree, 1), 0.0)
        audits.append({"side": tag, "count_in": cnt_in, "count_out": cnt_out,
                       "degree": degree, "total_share": ybar})
        if het in ("h2", "h4"):
            labels += [f"ybar_{tag}_{out_name}_t1", f"ybar_{tag}_{in_name}_t1"]
            cols += [share_out, share_in]
        else:  # h3: total, total x zHigh, high-peer share, high-peer share x zHigh
            z_high = split.high[rows.firm].astype(float)
            labels += [f"ybar_{tag}_t1", f"ybar_{tag}_t1:high",
                       f"ybar_{tag}_high_t1", f"ybar_{tag}_high_t1:high"]
            cols += [ybar, ybar * z_high, share_in, share_in * z_high]
    return cols, labels, audits


def _spatial_columns(rows, attrs, blocks, n_years):
    sec_zip = _cross_codes(attrs.industry_codes, attrs.zip_codes)
    cells = {"prop_imp_zip": attrs.zip_codes, "prop_imp_sec": attrs.industry_codes,
             "prop_imp_sec_zip": sec_zip}
    out = {}
    for name, codes in cells.items():
        per_origin = []
        for block in blocks:
            vals = np.zeros_like(block)
            for t in range(n_years):
                vals[:, t], _ = spatial_proportion_block(codes, block[:, t])
            per_origin.append(vals)
        out[name] = _gather(per_origin, rows, 1)
    return out


def _control_columns(rows, net, attrs):
    cols, labels = [], []
    t_now = rows.year_idx
    for name in CONTROL_NAMES:
        mat = attrs.control_matrix(name)
        labels.append(f"x_{name}")
        cols.append(mat[rows.firm, t_now])
    for name, flag_mat in attrs.flag_matrix().items():
        vals = flag_mat[rows.firm, t_now].astype(float)
        if 0 < vals.sum() < vals.size:
            labels.append(name)
            cols.append(vals)
    for side, tag in ((DOWNSTREAM, "D"), (UPSTREAM, "U")):
        for name in CONTROL_NAMES:
            avg, _ = contextual_average_block(net, attrs.control_matrix(name), side)
            labels.append(f"xbar_{tag}_{name}")
            cols.append(avg[rows.firm, t_now - 1])
    return cols, labels


def verify_partition_audits(design: Design, atol_counts: int = 0) -> None:
    """Check category-count partitions exactly; raises on any violation."""
    for audit in design.partition_audits:
        total_counts = audit["count_in"] + audit["count_out"]
        expect = np.round(audit["total_share"] * audit["degree"])
        ok = audit["degree"] > 0
        if not np.array_equal(total_counts[ok], expect[ok]):
            raise AssertionError(
                f"partition identity violated on side {audit['side']}: category "
                "counts do not sum to the overall importing-peer count.")
