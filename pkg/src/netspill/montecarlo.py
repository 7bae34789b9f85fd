"""Monte Carlo harness: repeated simulate-and-estimate runs with per-rep
seeds spawned from a master seed, parallel over replications."""

from __future__ import annotations

import os
import warnings

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .dgp import DgpConfig, gen_network, regime, simulate_panel
from .pipeline import PipelineSettings, run_spec
from .treatment import DesignSpec

TREATMENT_LABELS = ("ybar_D_t1", "ybar_U_t1")


def resolve_jobs(n_jobs=None) -> int:
    """Worker count: explicit argument, else NETSPILL_JOBS, else all cores."""
    if n_jobs is not None:
        return int(n_jobs)
    return int(os.environ.get("NETSPILL_JOBS", "-1"))


def rep_seeds(master_seed: int, reps: int) -> list[int]:
    """Deterministic per-replication seeds derived from a master seed."""
    return [int(s) for s in np.random.SeedSequence(int(master_seed)).generate_state(reps)]


def one_replication(config: DgpConfig, specs, seed: int,
                    settings: PipelineSettings | None = None) -> dict:
    """Simulate one dataset and estimate every requested specification."""
    cfg = config.replace(seed=seed)
    net = gen_network(cfg)
    dataset = simulate_panel(net, cfg)
    record: dict = {"seed": seed, "clamp_rate": dataset.clamp_rate}
    for spec in specs:
        spec = DesignSpec(spec) if isinstance(spec, str) else spec
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_spec(net, dataset.status, dataset.attrs, spec, settings)
        tag = spec.name
        record[f"{tag}:N"] = result.nobs
        for label in TREATMENT_LABELS:
            if label in result.labels:
                record[f"{tag}:{label}"] = result[label]
                record[f"{tag}:se:{label}"] = result.se_of(label)
        diag = result.diagnostics
        if "hansen_j" in diag:
            record[f"{tag}:j"] = diag["hansen_j"]
            record[f"{tag}:jp"] = diag["hansen_j_p"]
        if "first_stage_F" in diag:
            for label, f in diag["first_stage_F"].items():
                record[f"{tag}:F:{label}"] = f
        if "cragg_donald" in diag:
            record[f"{tag}:cragg_donald"] = diag["cragg_donald"]
    return record


def run_monte_carlo(config: DgpConfig, specs, reps: int, master_seed: int,
                    n_jobs=None, settings: PipelineSettings | None = None
                    ) -> pd.DataFrame:
    """Run ``reps`` independent replications and return one row per rep.

    Replications are independent tasks with spawned seeds, so the output is
    identical for any worker count; rows are ordered by replication index.
    """
    seeds = rep_seeds(master_seed, reps)
    records = Parallel(n_jobs=resolve_jobs(n_jobs))(
        delayed(one_replication)(config, specs, s, settings) for s in seeds)
    return pd.DataFrame.from_records(records)


def summarize_recovery(frame: pd.DataFrame, spec_name: str, truth: dict,
                       level: float = 0.95) -> pd.DataFrame:
    """Per-coefficient recovery summary: mean, bias, Monte Carlo SE of the
    mean, coverage of the truth, and the bias-to-2-MC-SE ratio."""
    from scipy import stats

    rows = []
    reps = len(frame)
    for label in TREATMENT_LABELS:
        col = f"{spec_name}:{label}"
        if col not in frame.columns:
            continue
        est = frame[col].to_numpy()
        se = frame[f"{spec_name}:se:{label}"].to_numpy()
        true_val = truth[label]
        mc_se = est.std(ddof=1) / np.sqrt(reps)
        crit = stats.norm.ppf(0.5 + level / 2)
        covered = np.abs(est - true_val) <= crit * se
        rows.append({
            "spec": spec_name, "coefficient": label, "true": true_val,
            "mean": est.mean(), "bias": est.mean() - true_val,
            "mc_se": mc_se, "bias_over_2mcse": (est.mean() - true_val) / (2 * mc_se),
            "sd": est.std(ddof=1), "mean_se": se.mean(),
            "coverage": covered.mean(), "reps": reps,
        })
    return pd.DataFrame(rows)


def rejection_rate(frame: pd.DataFrame, spec_name: str, alpha: float = 0.05) -> float:
    """Share of replications whose over-identification p-value rejects."""
    col = f"{spec_name}:jp"
    if col not in frame.columns:
        raise ValueError(f"no J p-values recorded for spec {spec_name!r}.")
    return float((frame[col] < alpha).mean())


def regime_grid(base: DgpConfig, regimes, specs, reps: int, master_seed: int,
                n_jobs=None) -> dict[str, pd.DataFrame]:
    """Run the Monte Carlo over a named-regime grid."""
    out = {}
    for k, name in enumerate(regimes):
        cfg = regime(base, name)
        out[name] = run_monte_carlo(cfg, specs, reps, master_seed + k, n_jobs)
    return out
