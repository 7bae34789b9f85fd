"""Analysis-panel assembly: import statuses, potential-starter selection,
firm attributes with derived controls, and baseline-year median splits.

The panel is a column store in canonical (firm, origin, year) order.  A row
exists for (i, c, t) only while firm i has never been observed importing
from origin c before t; the outcome is the import indicator at t, so each
(firm, origin) trajectory reads 0...0 or 0...01.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

ORIGINS = ("EU", "nonEU")

ATTRIBUTE_CSV_COLUMNS = ("firm_id", "year", "workers", "labor_cost", "total_sales",
                         "sales_to_firms", "interm_cost", "zip", "industry")
STATUS_CSV_COLUMNS = ("firm_id", "year", "eu_import", "noneu_import")

BASE_CONTROLS = ("workers", "labor_cost", "n_suppliers", "n_customers",
                 "interm_cost", "sales_to_firms")
DERIVED_CONTROLS = ("sales_per_customer", "labor_productivity",
                    "interm_productivity", "avg_salary")
CONTROL_NAMES = BASE_CONTROLS + DERIVED_CONTROLS

WHOLESALER_INDUSTRIES = frozenset({"45", "46", "47"})

SPLIT_CHARACTERISTICS = ("workers", "n_suppliers", "n_customers",
                         "labor_productivity", "interm_productivity", "wholesaler")


@dataclass
class StatusPanel:
    """Per-origin import statuses over a contiguous year range."""

    years: np.ndarray              # ascending calendar years
    statuses: np.ndarray           # (n, n_years, 2) bool; [:, :, 0]=EU, [:, :, 1]=nonEU

    @property
    def n(self) -> int:
        return self.statuses.shape[0]

    def year_index(self, year: int) -> int:
        idx = int(np.searchsorted(self.years, year))
        if idx >= self.years.size or self.years[idx] != year:
            raise ValueError(f"year {year} not covered by the status panel.")
        return idx

    def pooled(self) -> np.ndarray:
        """Any-origin status, (n, n_years) bool."""
        return self.statuses.any(axis=2)


@dataclass
class AttributeTable:
    """Firm-year attributes on the dense firm index.

    Numeric columns are (n, n_years) arrays; zip and industry are treated
    as time-invariant (first-year value).  Degree counts are attached from
    the yearly edge sets.  ``missing_firms`` lists firms without attribute
    records; their panel rows are dropped with a reported count.
    """

    years: np.ndarray
    numeric: dict[str, np.ndarray]
    zip_labels: np.ndarray
    zip_codes: np.ndarray          # dense (n,)
    industry_labels: np.ndarray
    industry_codes: np.ndarray     # dense (n,)
    missing_firms: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    wholesaler_industries: frozenset = WHOLESALER_INDUSTRIES

    @property
    def n(self) -> int:
        return self.zip_codes.size

    def province_codes(self, prefix_len: int = 2) -> np.ndarray:
        """Dense province codes from the leading digits of the zip label."""
        prefixes = np.array([str(z)[:prefix_len] for z in self.zip_labels])
        _, codes = np.unique(prefixes[self.zip_codes], return_inverse=True)
        return codes.astype(np.int64)

    def wholesaler_flags(self) -> np.ndarray:
        labels = self.industry_labels[self.industry_codes].astype(str)
        return np.isin(labels, sorted(self.wholesaler_industries))

    def control_matrix(self, name: str) -> np.ndarray:
        """(n, n_years) values for one control, with guarded ratios.

        Ratio controls are set to 0 where the denominator is 0; the
        companion flag columns are exposed via :meth:`flag_matrix`.
        """
        if name in self.numeric:
            return self.numeric[name]
        if name == "sales_per_customer":
            return _safe_ratio(self.numeric["sales_to_firms"], self.numeric["n_customers"])
        if name == "labor_productivity":
            return _safe_ratio(self.numeric["total_sales"], self.numeric["workers"])
        if name == "interm_productivity":
            return _safe_ratio(self.numeric["total_sales"], self.numeric["interm_cost"])
        if name == "avg_salary":
            return _safe_ratio(self.numeric["labor_cost"], self.numeric["workers"])
        raise KeyError(f"unknown control {name!r}.")

    def flag_matrix(self) -> dict[str, np.ndarray]:
        """Zero-denominator flags backing the guarded ratio controls."""
        return {
            "flag_zero_workers": self.numeric["workers"] == 0,
            "flag_zero_customers": self.numeric["n_customers"] == 0,
            "flag_zero_interm": self.numeric["interm_cost"] == 0,
        }

    def attach_degrees(self, yearly_suppliers, yearly_customers) -> None:
        """Attach per-year supplier/customer counts (n, n_years)."""
        self.numeric["n_suppliers"] = np.asarray(yearly_suppliers, dtype=float)
        self.numeric["n_customers"] = np.asarray(yearly_customers, dtype=float)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=float)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def yearly_degrees(edge_panel, years) -> tuple[np.ndarray, np.ndarray]:
    """Distinct suppliers and customers per firm and year from yearly edges."""
    years = np.asarray(years)
    n = edge_panel.n
    n_sup = np.zeros((n, years.size))
    n_cus = np.zeros((n, years.size))
    for t, year in enumerate(years):
        mask = edge_panel.years == year
        n_sup[:, t] = np.bincount(edge_panel.customers[mask], minlength=n)
        n_cus[:, t] = np.bincount(edge_panel.suppliers[mask], minlength=n)
    return n_sup, n_cus


def read_attribute_csv(path, firm_labels, years) -> AttributeTable:
    """Load the attributes CSV aligned with the dense firm index.

    Firms in ``firm_labels`` with no attribute record are collected in
    ``missing_firms``; their rows get dropped (and counted) downstream.
    Missing single years for an otherwise covered firm are forward/backward
    filled from the nearest covered year.
    """
    frame = pd.read_csv(path)
    missing_cols = [c for c in ATTRIBUTE_CSV_COLUMNS if c not in frame.columns]
    if missing_cols:
        raise ValueError(f"{path}: missing required column(s) {missing_cols}.")
    years = np.asarray(years)
    n = len(firm_labels)
    label_to_idx = {str(lb): i for i, lb in enumerate(np.asarray(firm_labels).astype(str))}
    firm_idx = frame["firm_id"].astype(str).map(label_to_idx)
    known = firm_idx.notna().to_numpy()
    frame = frame.loc[known]
    firm_idx = firm_idx[known].to_numpy(dtype=np.int64)
    year_pos = np.searchsorted(years, frame["year"].to_numpy())
    in_range = (year_pos < years.size) & (frame["year"].to_numpy() == years[np.minimum(year_pos, years.size - 1)])

    numeric = {}
    seen = np.zeros((n, years.size), dtype=bool)
    seen[firm_idx[in_range], year_pos[in_range]] = True
    for col in ("workers", "labor_cost", "total_sales", "sales_to_firms", "interm_cost"):
        mat = np.zeros((n, years.size))
        vals = pd.to_numeric(frame[col], errors="coerce").to_numpy()
        mat[firm_idx[in_range], year_pos[in_range]] = vals[in_range]
        numeric[col] = mat
    covered = seen.any(axis=1)
    # nearest-year fill for partially covered firms
    for t in range(years.size):
        hole = covered & ~seen[:, t]
        if hole.any():
            donor = np.where(seen[:, max(t - 1, 0)], max(t - 1, 0), -1)
            for s in range(years.size):
                donor = np.where((donor < 0) & seen[:, s], s, donor)
            for col in numeric.values():
                col[hole, t] = col[hole, donor[hole]]

    zips = np.full(n, "", dtype=object)
    inds = np.full(n, "", dtype=object)
    first = pd.DataFrame({"firm": firm_idx, "zip": frame["zip"].astype(str).to_numpy(),
                          "industry": frame["industry"].astype(str).to_numpy()}
                         ).drop_duplicates("firm", keep="first")
    zips[first["firm"].to_numpy()] = first["zip"].to_numpy()
    inds[first["firm"].to_numpy()] = first["industry"].to_numpy()
    missing = np.flatnonzero(~covered)
    zip_labels, zip_codes = np.unique(zips.astype(str), return_inverse=True)
    industry_labels, industry_codes = np.unique(inds.astype(str), return_inverse=True)
    return AttributeTable(
        years=years, numeric=numeric, zip_labels=zip_labels,
        zip_codes=zip_codes.astype(np.int64), industry_labels=industry_labels,
        industry_codes=industry_codes.astype(np.int64), missing_firms=missing,
    )


def read_status_csv(path, firm_labels, years) -> StatusPanel:
    """Load per-origin import statuses; a missing (firm, year) cell is an
    error rather than an implicit non-importer."""
    frame = pd.read_csv(path)
    missing_cols = [c for c in STATUS_CSV_COLUMNS if c not in frame.columns]
    if missing_cols:
        raise ValueError(f"{path}: missing required column(s) {missing_cols}.")
    years = np.asarray(years)
    n = len(firm_labels)
    label_to_idx = {str(lb): i for i, lb in enumerate(np.asarray(firm_labels).astype(str))}
    firm_idx = frame["firm_id"].astype(str).map(label_to_idx)
    known = firm_idx.notna().to_numpy()
    frame = frame.loc[known]
    firm_idx = firm_idx[known].to_numpy(dtype=np.int64)
    yr = frame["year"].to_numpy()
    pos = np.searchsorted(years, yr)
    ok = (pos < years.size) & (yr == years[np.minimum(pos, years.size - 1)])

    statuses = np.zeros((n, years.size, 2), dtype=bool)
    seen = np.zeros((n, years.size), dtype=bool)
    seen[firm_idx[ok], pos[ok]] = True
    for c, col in enumerate(("eu_import", "noneu_import")):
        vals = frame[col].to_numpy()
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{path}: {col} should be 0/1.")
        statuses[firm_idx[ok], pos[ok], c] = vals[ok].astype(bool)
    if not seen.all():
        i, t = np.argwhere(~seen)[0]
        raise ValueError(
            f"{path}: missing import status for firm index {i} in year "
            f"{int(years[t])}; statuses are required for every firm-year.")
    return StatusPanel(years=years, statuses=statuses)


def potential_starters(status: StatusPanel, origin, window=None) -> tuple[np.ndarray, np.ndarray]:
    """Eligibility and outcome for one origin (or pooled).

    Returns ``(eligible, y)`` as (n, n_years) arrays: eligible[i, t] is True
    when firm i has no observed import from the origin strictly before t
    (history scanned from the first covered year), and y[i, t] is the import
    indicator at t.  The first covered year has no history and is never an
    outcome year.  ``origin`` is 'EU', 'nonEU', an origin index, or 'pooled'.
    """
    if origin == "pooled":
        s = status.pooled()
    else:
        c = ORIGINS.index(origin) if isinstance(origin, str) else int(origin)
        s = status.statuses[:, :, c]
    ever_before = np.zeros_like(s)
    ever_before[:, 1:] = np.maximum.accumulate(s[:, :-1], axis=1)
    eligible = ~ever_before
    eligible[:, 0] = False
    if window is not None:
        lo, hi = window
        inside = (status.years >= lo) & (status.years <= hi)
        eligible = eligible & inside[None, :]
    return eligible, s.astype(float)


@dataclass
class ObservationPanel:
    """Column store of the analysis panel in canonical (firm, origin, year)
    order.  Treatment and control columns are attached by the pipeline."""

    mode: str                      # "per-origin" or "pooled"
    years: np.ndarray              # calendar years of the status panel
    firm: np.ndarray
    origin: np.ndarray             # 0/1 per-origin; all 0 when pooled
    year_idx: np.ndarray           # index into ``years``
    y: np.ndarray
    n_firms: int
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    numerators: dict[str, np.ndarray] = field(default_factory=dict)
    flags: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.firm.size

    def subset(self, keep: np.ndarray) -> "ObservationPanel":
        return ObservationPanel(
            mode=self.mode, years=self.years, firm=self.firm[keep],
            origin=self.origin[keep], year_idx=self.year_idx[keep],
            y=self.y[keep], n_firms=self.n_firms,
            columns={k: v[keep] for k, v in self.columns.items()},
            numerators={k: v[keep] for k, v in self.numerators.items()},
            flags={k: v[keep] for k, v in self.flags.items()},
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "firm": self.firm,
            "origin": [("pooled" if self.mode == "pooled" else ORIGINS[c]) for c in self.origin],
            "year": self.years[self.year_idx],
            "y": self.y,
        })
        for name, col in self.columns.items():
            frame[name] = col
        for name, col in self.flags.items():
            frame[name] = col.astype(int)
        return frame


def build_rows(status: StatusPanel, mode: str = "per-origin",
               window=None) -> ObservationPanel:
    """Emit potential-starter rows for all origins (or pooled)."""
    if mode not in ("per-origin", "pooled"):
        raise ValueError(f"mode should be 'per-origin' or 'pooled', got {mode!r}.")
    parts = []
    origins = (0, 1) if mode == "per-origin" else ("pooled",)
    for k, origin in enumerate(origins):
        eligible, y = potential_starters(status, origin, window)
        firm, year_idx = np.nonzero(eligible)
        parts.append((firm, np.full(firm.size, k, dtype=np.int64), year_idx,
                      y[firm, year_idx]))
    firm = np.concatenate([p[0] for p in parts])
    origin = np.concatenate([p[1] for p in parts])
    year_idx = np.concatenate([p[2] for p in parts])
    yv = np.concatenate([p[3] for p in parts])
    order = np.lexsort((year_idx, origin, firm))
    return ObservationPanel(
        mode=mode, years=status.years, firm=firm[order], origin=origin[order],
        year_idx=year_idx[order], y=yv[order], n_firms=status.n,
    )


@dataclass
class MedianSplit:
    """Time-invariant Low/High firm assignment at the baseline-year median.

    High means value strictly above the cutoff; ties go to Low.  The
    wholesaler characteristic bypasses the median and uses the sector flag.
    """

    characteristic: str
    cutoff: float
    high: np.ndarray               # (n,) bool

    @property
    def low(self) -> np.ndarray:
        return ~self.high


def median_split(attrs: AttributeTable, characteristic: str,
                 baseline_year: int) -> MedianSplit:
    if characteristic == "wholesaler":
        return MedianSplit(characteristic, np.nan, attrs.wholesaler_flags())
    t = int(np.searchsorted(attrs.years, baseline_year))
    if t >= attrs.years.size or attrs.years[t] != baseline_year:
        raise ValueError(f"baseline year {baseline_year} not covered by attributes.")
    values = attrs.control_matrix(characteristic)[:, t]
    cutoff = float(np.median(values))
    high = values > cutoff
    if not high.any():
        warnings.warn(
            f"median split on {characteristic!r}: all values at or below the "
            f"median ({cutoff}); every firm assigned Low.")
    return MedianSplit(characteristic, cutoff, high)
