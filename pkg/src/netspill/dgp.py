"""Synthetic data-generating process for the import peer-effects model.

Import starts follow a linear probability rule: for a firm not yet
importing from an origin, the start probability is the structural index
(baseline + lagged peer import shares + own/contextual observables +
own/contextual unobservables + firm-year and cell-origin-year effects),
clamped to [0, 1].  Import status is absorbing per origin.  The persistence
of the firm-origin unobservable is configurable (iid, MA(1), AR(1)); MA(1)
satisfies the limited-persistence condition the network instruments need,
AR(1) with nonzero rho violates it.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .network import EdgePanel, ProductionNetwork, build_edge_panel
from .panel import ORIGINS, AttributeTable, StatusPanel, yearly_degrees

CLAMP_WARN_RATE = 0.20

# log-size parameters shared by attribute generation and the standardized
# observable entering the structural index
_LOG_WORKERS_MEAN = 2.2
_LOG_WORKERS_SD = 1.0


@dataclass(frozen=True)
class DgpConfig:
    """All structural and shape parameters of the synthetic generator."""

    n_firms: int = 20_000
    n_years: int = 5
    first_year: int = 2010
    grid_size: int = 8             # zip cells per grid side
    province_span: int = 3         # grid cells per province block side
    n_industries: int = 8
    target_in_degree: float = 3.0
    target_out_degree: float = 3.0
    distance_decay: float | None = None   # spatial reach; None disables homophily
    industry_boost: float = 0.0
    # structural coefficients
    beta_d: float = 0.05
    beta_u: float = 0.10
    gamma: float = 0.002
    delta_d: float = 0.002
    delta_u: float = 0.002
    zeta: float = 0.11
    zeta_d: float = 0.12
    zeta_u: float = 0.06
    # shock scales
    sigma_mu: float = 0.003
    sigma_eta: float = 0.003
    sigma_eps: float = 0.0
    sigma_u: float = 1.0
    u_process: str = "ma1"         # "iid" | "ma1" | "ar1"
    u_shape: str = "lognormal"     # "normal" | "lognormal" (skewed, floored)
    u_skew: float = 1.5            # lognormal sharpness; floor = -1/sqrt(e^(a^2)-1) sds
    u_theta: float = 0.10
    u_rho: float = 0.0
    # levels
    baseline_start_prob: float = 0.075
    init_import_rate: float = 0.12
    init_import_rate_noneu: float | None = None   # defaults to init_import_rate
    # plumbing for the emitted files
    transient_edge_rate: float = 0.40
    value_location: float = 10.5
    value_sigma: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.n_firms < 10:
            raise ValueError("n_firms should be at least 10.")
        if self.n_years < 3:
            raise ValueError("n_years should be at least 3 (outcome plus two lags).")
        for name in ("baseline_start_prob", "init_import_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} should be in [0, 1], got {v}.")
        if self.u_process not in ("iid", "ma1", "ar1"):
            raise ValueError(f"u_process should be iid, ma1 or ar1, got {self.u_process!r}.")
        if self.u_shape not in ("normal", "lognormal"):
            raise ValueError(f"u_shape should be normal or lognormal, got {self.u_shape!r}.")
        if self.u_process == "ar1" and not -0.999 <= self.u_rho <= 0.999:
            raise ValueError("ar1 rho should be inside (-1, 1).")

    @property
    def years(self) -> np.ndarray:
        return self.first_year + np.arange(self.n_years)

    def u_autocorrelation(self, lag: int) -> float:
        """Autocorrelation of the latent Gaussian driver at a given lag."""
        if lag == 0:
            return 1.0
        if self.u_process == "iid":
            return 0.0
        if self.u_process == "ma1":
            return self.u_theta / (1 + self.u_theta ** 2) if abs(lag) == 1 else 0.0
        return self.u_rho ** abs(lag)

    def u_autocovariance(self, lag: int) -> float:
        """Stationary autocovariance of the unobservable entering the index.

        With the normal shape this is the linear-process autocovariance.
        The lognormal shape is a monotone transform of the same Gaussian
        driver, standardized to variance sigma_u^2; a zero autocorrelation
        of the driver maps to exact independence (so the lag-2 covariance
        stays exactly zero under iid or MA(1)), while a correlated driver
        maps to cov = sigma_u^2 (e^r - 1)/(e - 1) at driver correlation r.
        """
        s2 = self.sigma_u ** 2
        if self.u_shape == "normal":
            if self.u_process == "iid":
                return s2 if lag == 0 else 0.0
            if self.u_process == "ma1":
                if lag == 0:
                    return s2 * (1 + self.u_theta ** 2)
                return s2 * self.u_theta if abs(lag) == 1 else 0.0
            return s2 / (1 - self.u_rho ** 2) * self.u_rho ** abs(lag)
        a2 = self.u_skew ** 2
        r = self.u_autocorrelation(lag)
        return s2 * (np.exp(a2 * r) - 1.0) / (np.exp(a2) - 1.0)

    def replace(self, **kwargs) -> "DgpConfig":
        return dataclasses.replace(self, **kwargs)


def regime(config: DgpConfig, name: str) -> DgpConfig:
    """Switch the identification regime of a base configuration.

    valid-iv: MA(1) unobservables with contextual loadings on (OLS biased,
    network instruments valid).  violated-iv: AR(1) persistence, which
    breaks the lag-2 exclusion restriction.  no-contextual: contextual
    unobservable loadings off, so OLS is already unbiased.
    """
    if name == "valid-iv":
        theta = config.u_theta if config.u_theta != 0 else 0.10
        out = config.replace(u_process="ma1", u_theta=theta, u_rho=0.0)
        if out.zeta == 0 or (out.zeta_d == 0 and out.zeta_u == 0):
            out = out.replace(zeta=0.11, zeta_d=0.12, zeta_u=0.06)
        return out
    if name == "violated-iv":
        # persistence violates the lag-2 exclusion; the Gaussian shape keeps
        # the full rho^2 dependence that the skew transform would attenuate
        rho = config.u_rho if config.u_rho >= 0.6 else 0.8
        return config.replace(
            u_process="ar1", u_rho=rho, u_shape="normal", sigma_u=0.36,
            zeta=0.11, zeta_d=0.13, zeta_u=0.15, beta_d=0.15, beta_u=0.20,
            init_import_rate=0.45, init_import_rate_noneu=0.12,
            baseline_start_prob=0.045)
    if name == "no-contextual":
        return config.replace(zeta_d=0.0, zeta_u=0.0)
    raise ValueError(f"unknown regime {name!r}; "
                     "choose valid-iv, violated-iv or no-contextual.")


def calibration_preset(n_firms: int = 50_000, seed: int = 0) -> DgpConfig:
    """Configuration whose simulated moments echo the reported sample:
    mean degree between 6.5 and 6.9 and a yearly start rate near 3.6%."""
    return DgpConfig(
        n_firms=n_firms, n_years=5, grid_size=14, n_industries=16,
        target_in_degree=6.9, target_out_degree=6.5,
        distance_decay=2.0, industry_boost=1.0,
        beta_d=0.0118, beta_u=0.0102, gamma=0.004,
        delta_d=0.002, delta_u=0.002,
        zeta=0.01, zeta_d=0.01, zeta_u=0.01,
        sigma_mu=0.004, sigma_eta=0.004,
        baseline_start_prob=0.030, init_import_rate=0.30, seed=seed,
    )


def gen_network(config: DgpConfig, seed=None) -> ProductionNetwork:
    """Sample the fixed directed network with optional spatial/industry
    homophily, at an exact edge count implied by the degree targets.

    A single simple directed graph has one global mean degree, so the in-
    and out-degree targets are interpreted as bracketing values and the
    edge count is set to their midpoint times n.  Infeasible targets (too
    far apart, or denser than the graph can host) raise before sampling.
    """
    rng = _rng(config, seed, "network")
    n = config.n_firms
    mean_deg = (config.target_in_degree + config.target_out_degree) / 2.0
    for target in (config.target_in_degree, config.target_out_degree):
        if abs(mean_deg - target) > 0.15 * target:
            raise ValueError(
                f"degree targets {config.target_in_degree}/{config.target_out_degree} "
                "are too far apart for a single simple graph (their midpoint misses "
                "one of them by more than 15%).")
    n_edges = int(round(n * mean_deg))
    if n_edges > 0.3 * n * (n - 1):
        raise ValueError("degree targets imply a graph denser than supported.")

    cells, industries = _firm_locations(config, rng)
    grid = config.grid_size

    if config.distance_decay is None:
        sample_pairs = lambda m: (rng.integers(0, n, m), rng.integers(0, n, m))
    else:
        cell_weight = _cell_pair_weights(config)
        members = [np.flatnonzero(cells == c) for c in range(grid * grid)]
        counts = np.array([m.size for m in members], dtype=float)
        pair_w = (cell_weight * counts[:, None] * counts[None, :]).ravel()
        total = pair_w.sum()
        if total <= 0:
            raise ValueError("distance decay leaves no positive-probability firm pair.")
        pair_p = pair_w / total
        same_cell_cap = float(np.sum(counts * (counts - 1)))
        if config.distance_decay < 1e-6 and n_edges > 0.5 * same_cell_cap:
            raise ValueError("distance decay ~0 confines links to same-cell pairs, "
                             "which cannot host the requested edge count.")

        def sample_pairs(m):
            pick = rng.choice(pair_p.size, size=m, p=pair_p)
            c1, c2 = pick // (grid * grid), pick % (grid * grid)
            u = np.empty(m, dtype=np.int64)
            v = np.empty(m, dtype=np.int64)
            for c in np.unique(np.concatenate([c1, c2])):
                m1 = c1 == c
                if m1.any():
                    u[m1] = members[c][rng.integers(0, members[c].size, int(m1.sum()))]
                m2 = c2 == c
                if m2.any():
                    v[m2] = members[c][rng.integers(0, members[c].size, int(m2.sum()))]
            return u, v

    boost = config.industry_boost
    collected = np.empty(0, dtype=np.int64)
    for _ in range(200):
        need = n_edges - collected.size
        if need <= 0:
            break
        m = max(int(need * 1.6) + 64, 256)
        u, v = sample_pairs(m)
        keep = u != v
        if boost > 0:
            accept = (1.0 + boost * (industries[u] == industries[v])) / (1.0 + boost)
            keep &= rng.random(m) < accept
        keys = u[keep] * n + v[keep]
        collected = np.unique(np.concatenate([collected, keys]))
    else:
        raise RuntimeError("edge sampling failed to reach the target count; "
                           "the homophily constraints are too tight.")
    if collected.size > n_edges:
        collected = collected[rng.permutation(collected.size)[:n_edges]]
    collected.sort()

    values = np.exp(rng.normal(config.value_location, config.value_sigma, collected.size))
    net = ProductionNetwork(n, collected // n, collected % n, values=values)
    net.cells = cells
    net.industries = industries
    return net


_STREAMS = {"network": 1, "locations": 2, "panel": 3}


def _rng(config: DgpConfig, seed, label: str) -> np.random.Generator:
    if seed is None:
        seed = config.seed
    return np.random.default_rng(np.random.SeedSequence((int(seed), _STREAMS[label])))


def _firm_locations(config: DgpConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    cells = rng.integers(0, config.grid_size ** 2, config.n_firms)
    industries = rng.integers(0, config.n_industries, config.n_firms)
    return cells, industries


def _cell_pair_weights(config: DgpConfig) -> np.ndarray:
    g = config.grid_size
    rows, cols = np.divmod(np.arange(g * g), g)
    dist = np.hypot(rows[:, None] - rows[None, :], cols[:, None] - cols[None, :])
    lam = max(config.distance_decay, 1e-12)
    with np.errstate(under="ignore"):
        return np.exp(-dist / lam)


def zip_labels_for_cells(config: DgpConfig) -> np.ndarray:
    """Zip label per grid cell; the leading two digits are the province
    block, so province codes fall out of a prefix split."""
    g = config.grid_size
    span = config.province_span
    blocks_per_side = -(-g // span)
    rows, cols = np.divmod(np.arange(g * g), g)
    province = (rows // span) * blocks_per_side + (cols // span)
    within = (rows % span) * span + (cols % span)
    return np.array([f"{p:02d}{w:02d}" for p, w in zip(province, within)])


@dataclass
class SimulationDraws:
    """Retained shocks, sufficient to replay every status bit."""

    u: np.ndarray            # (n, T, 2)
    mu: np.ndarray           # (n, T)
    eta: np.ndarray          # (n_cells, T, 2) indexed by industry-zip cell
    eps: np.ndarray          # (n, T, 2)
    uniforms: np.ndarray     # (n, T, 2) Bernoulli draws for start events
    init_uniforms: np.ndarray
    x: np.ndarray            # (n, T) standardized observable
    cell_of_firm: np.ndarray


@dataclass
class SyntheticDataset:
    """Everything the estimation pipeline consumes, plus ground truth."""

    config: DgpConfig
    net: ProductionNetwork
    status: StatusPanel
    attrs: AttributeTable
    edges: EdgePanel
    truth: dict
    draws: SimulationDraws
    clamp_rate: float

    def write_csv(self, outdir) -> dict[str, str]:
        """Emit the exact CSV formats the network/panel loaders consume."""
        import os

        os.makedirs(outdir, exist_ok=True)
        paths = {}
        labels = self.edges.firm_labels
        paths["edges"] = os.path.join(outdir, "edges.csv")
        pd.DataFrame({
            "supplier_id": labels[self.edges.suppliers],
            "customer_id": labels[self.edges.customers],
            "year": self.edges.years,
            "value": np.round(self.edges.values, 2),
        }).to_csv(paths["edges"], index=False)

        years = self.status.years
        n = self.net.n
        firm_rep = np.repeat(np.arange(n), years.size)
        year_rep = np.tile(years, n)
        paths["attributes"] = os.path.join(outdir, "attributes.csv")
        num = self.attrs.numeric
        pd.DataFrame({
            "firm_id": labels[firm_rep],
            "year": year_rep,
            "workers": num["workers"].ravel(),
            "labor_cost": np.round(num["labor_cost"].ravel(), 3),
            "total_sales": np.round(num["total_sales"].ravel(), 3),
            "sales_to_firms": np.round(num["sales_to_firms"].ravel(), 3),
            "interm_cost": np.round(num["interm_cost"].ravel(), 3),
            "zip": self.attrs.zip_labels[self.attrs.zip_codes][firm_rep],
            "industry": self.attrs.industry_labels[self.attrs.industry_codes][firm_rep],
        }).to_csv(paths["attributes"], index=False)

        paths["imports"] = os.path.join(outdir, "imports.csv")
        pd.DataFrame({
            "firm_id": labels[firm_rep],
            "year": year_rep,
            "eu_import": self.status.statuses[:, :, 0].ravel().astype(int),
            "noneu_import": self.status.statuses[:, :, 1].ravel().astype(int),
        }).to_csv(paths["imports"], index=False)

        paths["truth"] = os.path.join(outdir, "truth.csv")
        pd.DataFrame(sorted(self.truth.items()), columns=["parameter", "value"]
                     ).to_csv(paths["truth"], index=False)
        return paths


def simulate_panel(net: ProductionNetwork, config: DgpConfig, seed=None) -> SyntheticDataset:
    """Run the structural forward simulation on a fixed network."""
    rng = _rng(config, seed, "panel")
    n, t_total = config.n_firms, config.n_years
    if net.n != n:
        raise ValueError("network size does not match the configuration.")

    cells = getattr(net, "cells", None)
    industries = getattr(net, "industries", None)
    if cells is None or industries is None:
        cells, industries = _firm_locations(config, _rng(config, seed, "locations"))

    # observable: standardized log workers, wandering slowly over years
    log_w0 = rng.normal(_LOG_WORKERS_MEAN, _LOG_WORKERS_SD, n)
    drift = np.cumsum(rng.normal(0.0, 0.05, (n, t_total)), axis=1)
    log_w = log_w0[:, None] + drift
    x = (log_w - _LOG_WORKERS_MEAN) / _LOG_WORKERS_SD

    u = _draw_u(config, rng, n, t_total)
    mu = rng.normal(0.0, config.sigma_mu, (n, t_total))
    cell_key = industries.astype(np.int64) * (config.grid_size ** 2) + cells
    cell_labels, cell_of_firm = np.unique(cell_key, return_inverse=True)
    eta = rng.normal(0.0, config.sigma_eta, (cell_labels.size, t_total, 2))
    eps = (rng.normal(0.0, config.sigma_eps, (n, t_total, 2))
           if config.sigma_eps > 0 else np.zeros((n, t_total, 2)))
    uniforms = rng.random((n, t_total, 2))
    init_uniforms = rng.random((n, 2))

    p_d = _row_normalized(net, "D")
    p_u = _row_normalized(net, "U")

    statuses = np.zeros((n, t_total, 2), dtype=bool)
    init_rates = np.array([config.init_import_rate,
                           config.init_import_rate if config.init_import_rate_noneu is None
                           else config.init_import_rate_noneu])
    statuses[:, 0, :] = init_uniforms < init_rates[None, :]
    clamped = 0
    at_risk = 0
    for t in range(1, t_total):
        s_prev = statuses[:, t - 1, :].astype(float)
        ybar_d = p_d @ s_prev
        ybar_u = p_u @ s_prev
        xbar_d = p_d @ x[:, t - 1]
        xbar_u = p_u @ x[:, t - 1]
        ubar_d = p_d @ u[:, t - 1, :]
        ubar_u = p_u @ u[:, t - 1, :]
        index = (config.baseline_start_prob
                 + config.beta_d * ybar_d + config.beta_u * ybar_u
                 + (config.gamma * x[:, t] + config.delta_d * xbar_d
                    + config.delta_u * xbar_u + mu[:, t])[:, None]
                 + config.zeta * u[:, t, :]
                 + config.zeta_d * ubar_d + config.zeta_u * ubar_u
                 + eta[cell_of_firm, t, :] + eps[:, t, :])
        eligible = ~statuses[:, t - 1, :]
        at_risk += int(eligible.sum())
        clamped += int((eligible & ((index < 0) | (index > 1))).sum())
        prob = np.clip(index, 0.0, 1.0)
        start = eligible & (uniforms[:, t, :] < prob)
        statuses[:, t, :] = statuses[:, t - 1, :] | start
    clamp_rate = clamped / at_risk if at_risk else 0.0
    if clamp_rate > CLAMP_WARN_RATE:
        warnings.warn(f"structural index clamped for {clamp_rate:.1%} of at-risk "
                      "cells; the parameterization is too extreme for the "
                      "linear-probability reading.")

    edges = _emit_yearly_edges(net, config, rng)
    attrs = _build_attributes(config, rng, log_w, cells, industries, edges)
    status = StatusPanel(years=config.years, statuses=statuses)

    truth = {f: getattr(config, f) for f in (
        "beta_d", "beta_u", "gamma", "delta_d", "delta_u", "zeta", "zeta_d",
        "zeta_u", "baseline_start_prob", "u_theta", "u_rho", "sigma_u",
        "sigma_mu", "sigma_eta", "sigma_eps", "init_import_rate", "seed")}
    truth["u_process"] = config.u_process
    truth["clamp_rate"] = clamp_rate
    draws = SimulationDraws(u=u, mu=mu, eta=eta, eps=eps, uniforms=uniforms,
                            init_uniforms=init_uniforms, x=x,
                            cell_of_firm=cell_of_firm)
    return SyntheticDataset(config=config, net=net, status=status, attrs=attrs,
                            edges=edges, truth=truth, draws=draws,
                            clamp_rate=clamp_rate)


def replay_statuses(dataset: SyntheticDataset) -> np.ndarray:
    """Recompute every status bit from the retained draws (audit path)."""
    cfg = dataset.config
    d = dataset.draws
    n, t_total = cfg.n_firms, cfg.n_years
    p_d = _row_normalized(dataset.net, "D")
    p_u = _row_normalized(dataset.net, "U")
    statuses = np.zeros((n, t_total, 2), dtype=bool)
    init_rates = np.array([cfg.init_import_rate,
                           cfg.init_import_rate if cfg.init_import_rate_noneu is None
                           else cfg.init_import_rate_noneu])
    statuses[:, 0, :] = d.init_uniforms < init_rates[None, :]
    for t in range(1, t_total):
        s_prev = statuses[:, t - 1, :].astype(float)
        index = (cfg.baseline_start_prob
                 + cfg.beta_d * (p_d @ s_prev) + cfg.beta_u * (p_u @ s_prev)
                 + (cfg.gamma * d.x[:, t] + cfg.delta_d * (p_d @ d.x[:, t - 1])
                    + cfg.delta_u * (p_u @ d.x[:, t - 1]) + d.mu[:, t])[:, None]
                 + cfg.zeta * d.u[:, t, :]
                 + cfg.zeta_d * (p_d @ d.u[:, t - 1, :])
                 + cfg.zeta_u * (p_u @ d.u[:, t - 1, :])
                 + d.eta[d.cell_of_firm, t, :] + d.eps[:, t, :])
        start = ~statuses[:, t - 1, :] & (d.uniforms[:, t, :] < np.clip(index, 0, 1))
        statuses[:, t, :] = statuses[:, t - 1, :] | start
    return statuses


def _draw_u(config: DgpConfig, rng, n: int, t_total: int) -> np.ndarray:
    e = rng.normal(0.0, 1.0, (n, t_total + 1, 2))
    if config.u_process == "iid":
        w = e[:, 1:, :]
        marginal_sd = 1.0
    elif config.u_process == "ma1":
        w = e[:, 1:, :] + config.u_theta * e[:, :-1, :]
        marginal_sd = np.sqrt(1 + config.u_theta ** 2)
    else:
        w = np.empty((n, t_total, 2))
        w[:, 0, :] = e[:, 1, :] / np.sqrt(1 - config.u_rho ** 2)
        for t in range(1, t_total):
            w[:, t, :] = config.u_rho * w[:, t - 1, :] + e[:, t + 1, :]
        marginal_sd = 1.0 / np.sqrt(1 - config.u_rho ** 2)
    if config.u_shape == "normal":
        return config.sigma_u * w
    # centered lognormal with unit variance and a hard floor at
    # -1/sqrt(e^(a^2) - 1) standard deviations, so sizable unobserved
    # heterogeneity cannot push the linear-probability index below zero
    a = config.u_skew
    w = a * w / marginal_sd
    v = (np.exp(w) - np.exp(a * a / 2)) / np.sqrt(
        (np.exp(a * a) - 1.0) * np.exp(a * a))
    return config.sigma_u * v


def _row_normalized(net: ProductionNetwork, side: str):
    mat = net.side_matrix(side).astype(float)
    deg = np.asarray(mat.sum(axis=1)).ravel()
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / deg[deg > 0]
    return mat.multiply(inv[:, None]).tocsr()


def _emit_yearly_edges(net: ProductionNetwork, config: DgpConfig, rng) -> EdgePanel:
    """Yearly edge records: the stable network every year with value jitter,
    plus short-lived noise links that the stable filter screens out."""
    n = config.n_firms
    adj = net.adjacency(weighted=True).tocoo()
    sup0, cus0, val0 = adj.row.astype(np.int64), adj.col.astype(np.int64), adj.data
    n_transient = int(round(config.transient_edge_rate * sup0.size))
    sup_parts, cus_parts, yr_parts, val_parts = [], [], [], []
    for year in config.years:
        jitter = np.exp(rng.normal(0.0, 0.10, sup0.size))
        sup_parts.append(sup0)
        cus_parts.append(cus0)
        yr_parts.append(np.full(sup0.size, year))
        val_parts.append(val0 * jitter)
        if n_transient:
            tu = rng.integers(0, n, n_transient)
            tv = rng.integers(0, n, n_transient)
            ok = tu != tv
            sup_parts.append(tu[ok])
            cus_parts.append(tv[ok])
            yr_parts.append(np.full(int(ok.sum()), year))
            val_parts.append(np.exp(rng.normal(config.value_location,
                                               config.value_sigma, int(ok.sum()))))
    labels = np.array([f"F{idx:07d}" for idx in range(n)])
    panel = build_edge_panel(np.concatenate(sup_parts), np.concatenate(cus_parts),
                             np.concatenate(yr_parts), np.concatenate(val_parts))
    # restore the full firm index space (isolated firms carry no edges) and
    # relabel with the emitted external ids
    present = panel.firm_labels.astype(np.int64)
    return EdgePanel(
        n=n, firm_labels=labels, suppliers=present[panel.suppliers],
        customers=present[panel.customers], years=panel.years, values=panel.values,
        self_loops_dropped=panel.self_loops_dropped,
        below_threshold_dropped=panel.below_threshold_dropped,
        duplicates_merged=panel.duplicates_merged,
    )


def _build_attributes(config: DgpConfig, rng, log_w, cells, industries,
                      edges: EdgePanel) -> AttributeTable:
    n, t_total = config.n_firms, config.n_years
    workers = np.maximum(np.round(np.exp(log_w)), 1.0)
    wage = (np.exp(rng.normal(3.3, 0.3, n))[:, None]
            * np.exp(rng.normal(0.0, 0.04, (n, t_total))))
    sales_per_worker = np.exp(rng.normal(4.6, 0.7, n))[:, None]
    sales_noise = np.exp(rng.normal(0.0, 0.10, (n, t_total)))
    total_sales = workers * sales_per_worker * sales_noise
    firm_share = np.clip(rng.uniform(0.2, 0.8, n)[:, None]
                         + rng.normal(0.0, 0.03, (n, t_total)), 0.05, 0.95)
    interm_share = np.clip(rng.uniform(0.2, 0.6, n)[:, None]
                           + rng.normal(0.0, 0.03, (n, t_total)), 0.05, 0.95)
    numeric = {
        "workers": workers,
        "labor_cost": workers * wage,
        "total_sales": total_sales,
        "sales_to_firms": total_sales * firm_share,
        "interm_cost": total_sales * interm_share,
    }
    cell_zip = zip_labels_for_cells(config)
    zip_strings = cell_zip[cells]
    industry_strings = np.array(
        [f"{45 + k}" for k in range(config.n_industries)])[industries]
    zip_labels, zip_codes = np.unique(zip_strings, return_inverse=True)
    industry_labels, industry_codes = np.unique(industry_strings, return_inverse=True)
    attrs = AttributeTable(
        years=config.years, numeric=numeric, zip_labels=zip_labels,
        zip_codes=zip_codes.astype(np.int64), industry_labels=industry_labels,
        industry_codes=industry_codes.astype(np.int64),
    )
    # yearly degree counts come from the emitted yearly edges, which add
    # transient noise links on top of the fixed structural network
    n_sup, n_cus = yearly_degrees(edges, config.years)
    attrs.attach_degrees(n_sup, n_cus)
    return attrs
