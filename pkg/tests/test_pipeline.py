import numpy as np
import pytest

from netspill.dgp import DgpConfig, gen_network, simulate_panel
from netspill.panel import build_rows, median_split
from netspill.pipeline import PipelineSettings, estimate_design, group_effects, run_spec
from netspill.report import coefficient_frame, diagnostics_frame, format_ladder, stars
from netspill.treatment import DesignSpec, build_design


@pytest.fixture(scope="module")
def dataset():
    cfg = DgpConfig(n_firms=2500, seed=42)
    net = gen_network(cfg)
    return net, simulate_panel(net, cfg)


class TestEstimateDesign:
    def test_ols_ladder_step(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        assert r.method == "ols"
        assert r.labels == ["ybar_D_t1", "ybar_U_t1"]
        assert r.fixed_effects == ("id-y", "eu-s-z-y")
        assert r.cluster_name == "id-y"

    def test_ledger_reconciles(self, dataset):
        net, ds = dataset
        for name in ("s1-col1", "s1-col5", "iv-t2", "s1-col6"):
            r = run_spec(net, ds.status, ds.attrs, DesignSpec(name))
            ledger = dict(r.drop_ledger)
            initial = ledger.pop("rows_initial")
            estimated = ledger.pop("rows_estimated")
            assert initial - sum(ledger.values()) == estimated == r.nobs

    def test_iv_diagnostics_present(self, dataset):
        net, ds = dataset
        with pytest.warns(UserWarning):
            r = run_spec(net, ds.status, ds.attrs, DesignSpec("iv-t23"))
        for key in ("hansen_j", "hansen_j_p", "cragg_donald", "first_stage_F",
                    "anderson_lm"):
            assert key in r.diagnostics
        assert r.diagnostics["hansen_j_dof"] == 2

    def test_controls_spec_runs(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col2"))
        assert "x_workers" in r.labels
        assert any(lb.startswith("xbar_D_") for lb in r.labels)

    def test_h_specs_run_and_partition(self, dataset):
        net, ds = dataset
        for name, kwargs in (("h1", {"characteristic": "workers"}),
                             ("h2", {"characteristic": "workers"}),
                             ("h3", {"characteristic": "n_suppliers"}),
                             ("h4", {"predicate": "same_industry"}),
                             ("h4", {"predicate": "reciprocal"})):
            r = run_spec(net, ds.status, ds.attrs, DesignSpec(name, **kwargs))
            assert r.nobs > 0

    def test_h2_weighted_shares_reproduce_total(self, dataset):
        # aggregation identity: category shares sum to the plain treatment
        net, ds = dataset
        rows = build_rows(ds.status)
        split = median_split(ds.attrs, "workers", 2010)
        d_all = build_design(rows, net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        d_h2 = build_design(rows, net, ds.status, ds.attrs,
                            DesignSpec("h2", characteristic="workers"), split=split)
        total = d_all.x[:, d_all.x_labels.index("ybar_D_t1")]
        low = d_h2.x[:, d_h2.x_labels.index("ybar_D_low_t1")]
        high = d_h2.x[:, d_h2.x_labels.index("ybar_D_high_t1")]
        assert np.allclose(low + high, total, atol=1e-12)

    def test_group_effects_identities(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("h3", characteristic="workers"))
        effects = group_effects(r, "D")
        base = r["ybar_D_t1"]
        assert effects["low_low"][0] == pytest.approx(base)
        total = (r["ybar_D_t1"] + r["ybar_D_t1:high"]
                 + r["ybar_D_high_t1"] + r["ybar_D_high_t1:high"])
        assert effects["high_high"][0] == pytest.approx(total)

    def test_singleton_toggle(self, dataset):
        net, ds = dataset
        keep = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"),
                        PipelineSettings(drop_singletons=False))
        drop = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        assert keep.nobs > drop.nobs
        assert drop.drop_ledger["singleton"] > 0
        assert keep.drop_ledger["singleton"] == 0

    def test_value_weighted_spec(self, dataset):
        net, ds = dataset
        uniform = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        weighted = run_spec(net, ds.status, ds.attrs,
                            DesignSpec("s1-col5", weights="value"))
        assert weighted.nobs > 0
        assert not np.allclose(uniform.coef, weighted.coef)


class TestReport:
    def test_stars_thresholds(self):
        assert stars(0.004) == "***"
        assert stars(0.03) == "**"
        assert stars(0.07) == "*"
        assert stars(0.2) == ""

    def test_frames(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        cf = coefficient_frame(r)
        assert list(cf.columns) == ["label", "coef", "se", "t", "p", "stars"]
        df = diagnostics_frame(r)
        keys = set(df["key"])
        assert {"N", "fixed_effects", "r2_within"} <= keys
        assert any(k.startswith("drop:") for k in keys)

    def test_ladder_alignment_and_footers(self, dataset):
        net, ds = dataset
        r1 = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col3"))
        r5 = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        table = format_ladder([r1, r5])
        lines = table.splitlines()
        ybar_lines = [ln for ln in lines if ln.startswith("ybar_D_t1")]
        assert len(ybar_lines) == 1          # shared label on one row
        assert "eu-s-z-y" in table and "eu-y" in table
        assert "clustering variable" in table

    def test_iv_footer_rows(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("iv-t2"))
        table = format_ladder([r])
        for row in ("idstat", "widstat", "j", "jp"):
            assert row in table

    def test_duplicate_label_collision(self, dataset):
        net, ds = dataset
        r = run_spec(net, ds.status, ds.attrs, DesignSpec("s1-col5"))
        r.labels = ["dup", "dup"]
        with pytest.raises(ValueError, match="duplicate coefficient label"):
            format_ladder([r])
