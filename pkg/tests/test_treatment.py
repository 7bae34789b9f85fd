import numpy as np
import pytest

from netspill.network import DOWNSTREAM, UPSTREAM, ProductionNetwork
from netspill.panel import AttributeTable, StatusPanel, build_rows, median_split
from netspill.treatment import (DesignSpec, build_design, category_shares,
                                instrument_share, link_flags, peer_share,
                                spatial_props, verify_partition_audits)

YEARS = np.arange(2010, 2015)


def star_net(values=None):
    """Firm 0 with suppliers {1,2,3} and customers {4,5}; 1 also supplies 4."""
    edges = [(1, 0), (2, 0), (3, 0), (0, 4), (0, 5), (1, 4)]
    vals = None
    if values is not None:
        vals = [values[e] for e in edges]
    return ProductionNetwork(6, [e[0] for e in edges], [e[1] for e in edges], values=vals)


def status_with(importers_by_year, n=6):
    statuses = np.zeros((n, YEARS.size, 2), dtype=bool)
    for year, firms in importers_by_year.items():
        t = int(np.searchsorted(YEARS, year))
        for i in firms:
            statuses[i, t:, 0] = True
    return StatusPanel(years=YEARS, statuses=statuses)


def small_attrs(n=6, industries=None, zips=None):
    numeric = {k: np.full((n, YEARS.size), v) for k, v in
               [("workers", 4.0), ("labor_cost", 40.0), ("total_sales", 800.0),
                ("sales_to_firms", 300.0), ("interm_cost", 200.0),
                ("n_suppliers", 1.0), ("n_customers", 1.0)]}
    zips = zips if zips is not None else ["0101"] * n
    industries = industries if industries is not None else ["20"] * n
    zl, zc = np.unique(zips, return_inverse=True)
    il, ic = np.unique(industries, return_inverse=True)
    return AttributeTable(years=YEARS, numeric=numeric, zip_labels=zl,
                          zip_codes=zc.astype(np.int64), industry_labels=il,
                          industry_codes=ic.astype(np.int64))


class TestPeerShare:
    def test_single_importing_supplier(self):
        net = ProductionNetwork(2, [1], [0])
        sp = status_with({2010: [1]}, n=2)
        share, ok = peer_share(net, sp, 0, "EU", 2011, DOWNSTREAM)
        assert ok and share == 1.0

    def test_one_of_three(self):
        net = star_net()
        sp = status_with({2010: [1]})
        share, ok = peer_share(net, sp, 0, "EU", 2011, DOWNSTREAM)
        assert ok and share == pytest.approx(1 / 3)
        # count oracle
        peers = net.suppliers(0)
        importing = sp.statuses[peers, 0, 0].sum()
        assert share == importing / peers.size

    def test_value_weights(self):
        values = {(1, 0): 300.0, (2, 0): 100.0, (3, 0): 0.0,
                  (0, 4): 1.0, (0, 5): 1.0, (1, 4): 1.0}
        net = star_net(values)
        sp = status_with({2010: [1]})
        share, ok = peer_share(net, sp, 0, "EU", 2011, DOWNSTREAM, weights="value")
        assert ok and share == pytest.approx(300 / 400)

    def test_no_peers_flagged(self):
        net = star_net()
        sp = status_with({})
        share, ok = peer_share(net, sp, 1, "EU", 2011, DOWNSTREAM)
        assert not ok and share == 0.0

    def test_scale_invariance_of_value_weights(self):
        base = {(1, 0): 300.0, (2, 0): 100.0, (3, 0): 50.0,
                (0, 4): 2.0, (0, 5): 3.0, (1, 4): 4.0}
        sp = status_with({2010: [1, 3]})
        s1, _ = peer_share(star_net(base), sp, 0, "EU", 2011, DOWNSTREAM, weights="value")
        scaled = {k: 17.0 * v for k, v in base.items()}
        s2, _ = peer_share(star_net(scaled), sp, 0, "EU", 2011, DOWNSTREAM, weights="value")
        assert s1 == pytest.approx(s2)

    def test_count_is_integer(self):
        rng = np.random.default_rng(0)
        n = 25
        u = rng.integers(0, n, 70)
        v = rng.integers(0, n, 70)
        keep = u != v
        edges = sorted(set(zip(u[keep].tolist(), v[keep].tolist())))
        net = ProductionNetwork(n, [e[0] for e in edges], [e[1] for e in edges])
        raw = rng.random((n, YEARS.size)) < 0.3
        raw = np.maximum.accumulate(raw, axis=1)
        sp = StatusPanel(years=YEARS, statuses=np.stack([raw, raw], axis=2))
        from netspill.treatment import peer_share_block
        shares, numer, ok = peer_share_block(net, raw[:, 1].astype(float), DOWNSTREAM)
        assert np.array_equal(numer, np.round(numer))
        assert np.all((shares >= 0) & (shares <= 1))


class TestInstrumentShare:
    def test_half_of_exclusive_set(self):
        # G0 graph: 1->2, 2->3, 2->4, 5->1; exclusive set of 1 upstream = {3,4}
        net = ProductionNetwork(6, [1, 2, 2, 5], [2, 3, 4, 1])
        sp = status_with({2010: [3]})
        share, ok = instrument_share(net, sp, 1, "EU", 2012, UPSTREAM, lag=2)
        assert ok and share == 0.5
        # enumeration oracle
        members = net.second_order_exclusive(1, UPSTREAM, True)
        expect = sp.statuses[members, 0, 0].mean()
        assert share == expect

    def test_empty_set_flagged(self):
        net = ProductionNetwork(6, [1, 2, 2, 5], [2, 3, 4, 1])
        sp = status_with({2010: [3]})
        share, ok = instrument_share(net, sp, 3, "EU", 2012, UPSTREAM, lag=2)
        assert not ok

    def test_lag3_uses_older_statuses(self):
        net = ProductionNetwork(6, [1, 2, 2, 5], [2, 3, 4, 1])
        sp = status_with({2011: [3], 2012: [4]})
        s2, _ = instrument_share(net, sp, 1, "EU", 2014, UPSTREAM, lag=2)
        s3, _ = instrument_share(net, sp, 1, "EU", 2014, UPSTREAM, lag=3)
        assert s2 == 1.0          # both 3 and 4 importing by 2012
        assert s3 == 0.5          # only 3 importing at 2011

    def test_bad_lag(self):
        net = ProductionNetwork(6, [1, 2, 2, 5], [2, 3, 4, 1])
        with pytest.raises(ValueError):
            instrument_share(net, status_with({}), 1, "EU", 2014, UPSTREAM, lag=4)


class TestSpatialProps:
    def test_zip_proportion(self):
        attrs = small_attrs(zips=["01", "01", "01", "01", "02", "02"])
        sp = status_with({2010: [1, 2]})
        out = spatial_props(attrs, sp, 0, "EU", 2011)
        # zip peers of firm 0 are {1,2,3}; 1 and 2 import
        assert out.prop_imp_zip == pytest.approx(2 / 3)

    def test_alone_in_zip_flagged_zero(self):
        attrs = small_attrs(zips=["01", "02", "02", "02", "02", "02"])
        sp = status_with({2010: [1]})
        out = spatial_props(attrs, sp, 0, "EU", 2011)
        assert out.prop_imp_zip == 0.0
        assert out.flags["prop_imp_zip"]

    def test_sec_zip_cell_single_peer(self):
        attrs = small_attrs(zips=["01", "01", "02", "02", "02", "02"],
                            industries=["20", "20", "30", "30", "30", "30"])
        sp = status_with({2010: [1]})
        out = spatial_props(attrs, sp, 0, "EU", 2011)
        assert out.prop_imp_sec_zip == 1.0

    def test_focal_firm_excluded(self):
        attrs = small_attrs(zips=["01"] * 6)
        sp = status_with({2010: [0, 1]})
        out = spatial_props(attrs, sp, 0, "EU", 2011)
        # firm 0 imports itself; numerator counts peers only: 1 of 5
        assert out.prop_imp_zip == pytest.approx(1 / 5)


class TestCategoryShares:
    def test_firm_level_partition(self):
        net = star_net()
        sp = status_with({2010: [1, 2]})
        high = np.array([False, False, True, False, False, False])
        got = category_shares(net, sp, high, 0, "EU", 2011, DOWNSTREAM, level="firm")
        assert got["in"] == pytest.approx(1 / 3)    # high importing: firm 2
        assert got["out"] == pytest.approx(1 / 3)   # low importing: firm 1

    def test_sum_property(self):
        net = star_net()
        sp = status_with({2010: [1, 2]})
        high = np.array([False, False, True, False, False, False])
        got = category_shares(net, sp, high, 0, "EU", 2011, DOWNSTREAM, level="firm")
        total, _ = peer_share(net, sp, 0, "EU", 2011, DOWNSTREAM)
        assert got["in"] + got["out"] == pytest.approx(total)

    def test_reciprocal_link_predicate(self):
        # edges 0->4 and 4->0: reciprocal pair
        net = ProductionNetwork(6, [1, 2, 3, 0, 0, 4], [0, 0, 0, 4, 5, 0])
        sp = status_with({2010: [4]})
        flags = link_flags(net, DOWNSTREAM, "reciprocal")
        got = category_shares(net, sp, flags, 0, "EU", 2011, DOWNSTREAM, level="link")
        # suppliers of 0: {1,2,3,4}; only 4 is reciprocal and importing
        assert got["in"] == pytest.approx(1 / 4)
        assert got["out"] == 0.0

    def test_same_industry_predicate(self):
        net = star_net()
        attrs = small_attrs(industries=["20", "20", "30", "30", "20", "30"])
        sp = status_with({2010: [1, 2]})
        flags = link_flags(net, DOWNSTREAM, "same_industry", attrs)
        got = category_shares(net, sp, flags, 0, "EU", 2011, DOWNSTREAM, level="link")
        # suppliers {1,2,3}: same industry as 0 -> only 1 (importing)
        assert got["in"] == pytest.approx(1 / 3)
        assert got["out"] == pytest.approx(1 / 3)

    def test_same_province_prefix(self):
        net = star_net()
        attrs = small_attrs(zips=["0101", "0102", "0201", "0202", "0101", "0303"])
        flags = link_flags(net, DOWNSTREAM, "same_province", attrs, province_prefix=2)
        owners = np.repeat(np.arange(6), np.diff(net.side_matrix(DOWNSTREAM).indptr))
        peers = net.side_matrix(DOWNSTREAM).indices
        for o, p, f in zip(owners, peers, flags):
            assert f == (attrs.zip_labels[attrs.zip_codes[o]][:2]
                         == attrs.zip_labels[attrs.zip_codes[p]][:2])


def dataset_for_design(seed=0, n=400):
    rng = np.random.default_rng(seed)
    u = rng.integers(0, n, 4 * n)
    v = rng.integers(0, n, 4 * n)
    keep = u != v
    edges = sorted(set(zip(u[keep].tolist(), v[keep].tolist())))
    net = ProductionNetwork(n, [e[0] for e in edges], [e[1] for e in edges])
    raw = np.zeros((n, YEARS.size, 2), dtype=bool)
    raw[:, 0, :] = rng.random((n, 2)) < 0.25
    for t in range(1, YEARS.size):
        start = (rng.random((n, 2)) < 0.12) & ~raw[:, t - 1, :]
        raw[:, t, :] = raw[:, t - 1, :] | start
    sp = StatusPanel(years=YEARS, statuses=raw)
    numeric = {
        "workers": np.maximum(rng.lognormal(2, 1, (n, 1)), 1).round() * np.exp(
            rng.normal(0, 0.05, (n, YEARS.size))),
        "labor_cost": rng.lognormal(4, 0.5, (n, YEARS.size)),
        "total_sales": rng.lognormal(7, 1, (n, YEARS.size)),
        "sales_to_firms": rng.lognormal(6, 1, (n, YEARS.size)),
        "interm_cost": rng.lognormal(6, 0.8, (n, YEARS.size)),
    }
    zips = [f"{rng.integers(0, 4):02d}{rng.integers(0, 3):02d}" for _ in range(n)]
    industries = [str(rng.integers(44, 50)) for _ in range(n)]
    zl, zc = np.unique(zips, return_inverse=True)
    il, ic = np.unique(industries, return_inverse=True)
    attrs = AttributeTable(years=YEARS, numeric=numeric, zip_labels=zl,
                           zip_codes=zc.astype(np.int64), industry_labels=il,
                           industry_codes=ic.astype(np.int64))
    attrs.attach_degrees(np.tile(net.in_degrees[:, None], (1, YEARS.size)).astype(float),
                         np.tile(net.out_degrees[:, None], (1, YEARS.size)).astype(float))
    return net, sp, attrs


class TestBuildDesign:
    def test_h1_interaction_layout(self):
        net, sp, attrs = dataset_for_design()
        rows = build_rows(sp)
        split = median_split(attrs, "workers", 2010)
        design = build_design(rows, net, sp, attrs, DesignSpec("h1", characteristic="workers"),
                              split=split)
        k = design.x_labels.index("ybar_D_t1:high")
        k_low = design.x_labels.index("ybar_D_t1:low")
        high_rows = split.high[design.rows.firm]
        assert np.all(design.x[~high_rows, k] == 0)
        assert np.all(design.x[high_rows, k_low] == 0)
        # where z_high=1, the high column equals the total share
        total = design.x[:, k] + design.x[:, k_low]
        assert np.all((design.x[high_rows, k] == total[high_rows]))

    def test_h3_layout_substitution(self):
        net, sp, attrs = dataset_for_design(1)
        rows = build_rows(sp)
        split = median_split(attrs, "workers", 2010)
        design = build_design(rows, net, sp, attrs, DesignSpec("h3", characteristic="workers"),
                              split=split)
        labels = design.x_labels
        assert labels[:4] == ["ybar_D_t1", "ybar_D_t1:high",
                              "ybar_D_high_t1", "ybar_D_high_t1:high"]
        r = 0
        z_high = split.high[design.rows.firm[r]]
        total, high_share = design.x[r, 0], design.x[r, 2]
        assert design.x[r, 1] == (total if z_high else 0.0)
        assert design.x[r, 3] == (high_share if z_high else 0.0)

    def test_h2_partition_audit_passes(self):
        net, sp, attrs = dataset_for_design(2)
        rows = build_rows(sp)
        split = median_split(attrs, "workers", 2010)
        design = build_design(rows, net, sp, attrs, DesignSpec("h2", characteristic="workers"),
                              split=split)
        verify_partition_audits(design)
        low = design.x[:, design.x_labels.index("ybar_D_low_t1")]
        high = design.x[:, design.x_labels.index("ybar_D_high_t1")]
        counts = design.partition_audits[0]
        total = counts["count_in"] + counts["count_out"]
        assert np.array_equal(total, np.round(counts["total_share"] * counts["degree"]))

    def test_iv_columns_and_drops(self):
        net, sp, attrs = dataset_for_design(3)
        rows = build_rows(sp)
        design = build_design(rows, net, sp, attrs, DesignSpec("iv-t23"))
        assert design.z_labels == ["ybar2_D_t2", "ybar2_U_t2", "ybar2_D_t3", "ybar2_U_t3"]
        assert design.drop_ledger["insufficient_lag"] > 0
        assert (design.rows_initial - sum(design.drop_ledger.values())
                == design.n_rows)

    def test_spillover_columns_present(self):
        net, sp, attrs = dataset_for_design(4)
        rows = build_rows(sp)
        design = build_design(rows, net, sp, attrs, DesignSpec("s1-col4"))
        for name in ("prop_imp_zip", "prop_imp_sec", "prop_imp_sec_zip"):
            assert name in design.x_labels

    def test_pooled_mode_guard(self):
        with pytest.raises(ValueError, match="firm-by-year"):
            DesignSpec("s1-col6", factors=("id-y", "s-z-y")).resolve()

    def test_unknown_spec(self):
        with pytest.raises(ValueError, match="unknown specification"):
            DesignSpec("s1-col9").resolve()

    def test_h_spec_requires_characteristic(self):
        with pytest.raises(ValueError, match="characteristic"):
            DesignSpec("h1").resolve()

    def test_value_weights_with_categories_rejected(self):
        with pytest.raises(ValueError, match="uniform weighting"):
            DesignSpec("h2", characteristic="workers", weights="value").resolve()
