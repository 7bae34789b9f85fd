import numpy as np
import pytest

from netspill import hdfe
from netspill.hdfe import ConvergenceError, FactorSpec


def factor(name, codes):
    codes = np.asarray(codes)
    return FactorSpec(name, codes, int(codes.max()) + 1)


class TestEncode:
    def test_firm_year_groups(self):
        rows = {"firm": np.array([1, 1, 2]), "year": np.array([0, 1, 0])}
        specs = hdfe.encode(rows, {"id-y": ("firm", "year")})
        assert specs[0].n_groups == 3

    def test_origin_not_in_key_shares_group(self):
        rows = {"firm": np.array([1, 1]), "year": np.array([0, 0]),
                "origin": np.array([0, 1])}
        specs = hdfe.encode(rows, {"id-y": ("firm", "year")})
        assert specs[0].codes[0] == specs[0].codes[1]

    def test_origin_in_key_separates(self):
        rows = {"origin": np.array([0, 1]), "industry": np.array([0, 0]),
                "zip": np.array([9, 9]), "year": np.array([2, 2])}
        specs = hdfe.encode(rows, {"eu-s-z-y": ("origin", "industry", "zip", "year")})
        assert specs[0].n_groups == 2

    def test_missing_key_errors(self):
        with pytest.raises(ValueError, match="key column"):
            hdfe.encode({"firm": np.array([0])}, {"id-y": ("firm", "year")})


class TestSingletons:
    def test_single_pass(self):
        f = factor("a", [0, 0, 1])
        assert hdfe.singleton_mask([f], recursive=False).tolist() == [False, False, True]

    def test_recursive_fixpoint(self):
        # dropping the row alone under factor b orphans a row under factor a
        fa = factor("a", [0, 0, 1, 1])
        fb = factor("b", [0, 1, 1, 2])
        mask = hdfe.singleton_mask([fa, fb], recursive=True)
        # row 3 is alone in b-group 2; dropping it leaves row 2 alone in a-group 1;
        # dropping that leaves row 1 alone in b-group 1, and then row 0 alone in a0
        assert mask.all()
        # oracle: iterate drops by hand to the fixpoint
        rows = {0, 1, 2, 3}
        a = {0: 0, 1: 0, 2: 1, 3: 1}
        b = {0: 0, 1: 1, 2: 1, 3: 2}
        changed = True
        while changed:
            changed = False
            for mapping in (a, b):
                counts = {}
                for r in rows:
                    counts[mapping[r]] = counts.get(mapping[r], 0) + 1
                lonely = {r for r in rows if counts[mapping[r]] == 1}
                if lonely:
                    rows -= lonely
                    changed = True
        assert rows == set(np.flatnonzero(~mask))

    def test_no_singletons_identity(self):
        f = factor("a", [0, 0, 1, 1])
        assert not hdfe.singleton_mask([f]).any()


class TestDemean:
    def test_single_factor_one_pass(self):
        out = hdfe.demean(np.array([1.0, 2.0, 3.0, 4.0]), [factor("g", [0, 0, 1, 1])])
        assert np.allclose(out.values.ravel(), [-0.5, 0.5, -0.5, 0.5])
        assert out.iterations == 1

    def test_nested_factors_match_finer(self):
        rng = np.random.default_rng(0)
        coarse = np.repeat(np.arange(5), 8)
        fine = np.repeat(np.arange(10), 4)
        y = rng.normal(size=40)
        both = hdfe.demean(y, [factor("c", coarse), factor("f", fine)])
        only_fine = hdfe.demean(y, [factor("f", fine)])
        assert both.iterations <= 2
        assert np.allclose(both.values, only_fine.values, atol=1e-12)

    def test_balanced_two_way_additive(self):
        # y additive in the two factors on a 2x2 balanced layout -> zero residual
        out = hdfe.demean(np.array([1.0, 2.0, 3.0, 4.0]),
                          [factor("a", [0, 0, 1, 1]), factor("b", [0, 1, 0, 1])])
        assert np.allclose(out.values, 0.0, atol=1e-12)

    def test_two_way_closed_form(self):
        # balanced two-way layout: residual = y - row mean - col mean + grand mean
        rng = np.random.default_rng(3)
        a_codes = np.repeat(np.arange(4), 6)
        b_codes = np.tile(np.arange(6), 4)
        y = rng.normal(size=24)
        res = hdfe.demean(y, [factor("a", a_codes), factor("b", b_codes)],
                          tol=1e-12).values.ravel()
        closed = (y - y.reshape(4, 6).mean(1)[a_codes]
                  - y.reshape(4, 6).mean(0)[b_codes] + y.mean())
        assert np.allclose(res, closed, atol=1e-9)

    def test_projection_idempotent(self):
        rng = np.random.default_rng(1)
        f1 = factor("a", rng.integers(0, 7, 120))
        f2 = factor("b", rng.integers(0, 9, 120))
        x = rng.normal(size=(120, 3))
        once = hdfe.demean(x, [f1, f2], tol=1e-11)
        twice = hdfe.demean(once.values, [f1, f2], tol=1e-11)
        assert np.allclose(once.values, twice.values, atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        f1 = factor("a", rng.integers(0, 6, 90))
        f2 = factor("b", rng.integers(0, 5, 90))
        x = rng.normal(size=90)
        w = rng.normal(size=90)
        lhs = hdfe.demean(2.0 * x + 3.0 * w, [f1, f2], tol=1e-12).values.ravel()
        rhs = (2.0 * hdfe.demean(x, [f1, f2], tol=1e-12).values.ravel()
               + 3.0 * hdfe.demean(w, [f1, f2], tol=1e-12).values.ravel())
        assert np.allclose(lhs, rhs, atol=1e-8)

    def test_tolerance_contract_audited(self):
        rng = np.random.default_rng(4)
        f1 = factor("a", rng.integers(0, 20, 400))
        f2 = factor("b", rng.integers(0, 20, 400))
        out = hdfe.demean(rng.normal(size=(400, 2)), [f1, f2], tol=1e-9)
        scale = np.maximum(np.sqrt(np.mean(out.values ** 2, axis=0)), 1.0)
        for f in (f1, f2):
            for j in range(2):
                means = np.bincount(f.codes, weights=out.values[:, j],
                                    minlength=f.n_groups)
                means /= np.maximum(np.bincount(f.codes, minlength=f.n_groups), 1)
                assert np.abs(means).max() <= 1e-9 * max(scale[j], 1.0) * 1.0000001

    def test_nonconvergence_raises_with_trace(self):
        rng = np.random.default_rng(5)
        f1 = factor("a", rng.integers(0, 40, 100))
        f2 = factor("b", rng.integers(0, 40, 100))
        with pytest.raises(ConvergenceError) as err:
            hdfe.demean(rng.normal(size=100), [f1, f2], tol=1e-12, max_iter=2)
        assert len(err.value.trace) == 2

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            hdfe.demean(np.ones(4), [factor("a", [0, 0, 1, 1])], tol=0.0)


class TestAbsorbedDof:
    def test_one_factor(self):
        assert hdfe.absorbed_dof([factor("a", [0, 1, 2, 0, 1, 2])]) == (3, False)

    def test_two_factors_one_component(self):
        # chain connects all groups: 3 + 4 - 1 = 6
        a = factor("a", [0, 0, 1, 1, 2, 2])
        b = factor("b", [0, 1, 1, 2, 2, 3])
        assert hdfe.absorbed_dof([a, b]) == (6, False)

    def test_two_factors_two_components(self):
        a = factor("a", [0, 0, 1, 1, 2, 2])
        b = factor("b", [0, 1, 0, 1, 2, 3])   # groups {a0,a1}x{b0,b1} | {a2}x{b2,b3}
        assert hdfe.absorbed_dof([a, b]) == (5, False)

    def test_bipartite_component_oracle(self):
        rng = np.random.default_rng(7)
        a_codes = rng.integers(0, 12, 200)
        b_codes = rng.integers(0, 15, 200)
        a, b = factor("a", a_codes), factor("b", b_codes)
        # union-find oracle over the bipartite group graph
        parent = list(range(a.n_groups + b.n_groups))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for ga, gb in zip(a_codes, b_codes):
            ra, rb = find(ga), find(a.n_groups + gb)
            if ra != rb:
                parent[ra] = rb
        present = set(a_codes.tolist()) | {a.n_groups + g for g in b_codes.tolist()}
        components = len({find(x) for x in present})
        dof, approx = hdfe.absorbed_dof([a, b])
        assert not approx
        assert dof == a.n_groups + b.n_groups - components

    def test_three_factors_flagged(self):
        rng = np.random.default_rng(8)
        fs = [factor(k, rng.integers(0, 5, 60)) for k in "abc"]
        dof, approx = hdfe.absorbed_dof(fs)
        assert approx
        assert dof <= sum(f.n_groups for f in fs)

    def test_cluster_nested_factor_excluded(self):
        # factor groups sit inside clusters -> contributes nothing
        codes = np.array([0, 0, 1, 1, 2, 2])
        clusters = np.array([0, 0, 0, 0, 1, 1])
        f = factor("a", codes)
        assert hdfe.absorbed_dof([f], cluster_codes=clusters) == (0, False)
        not_nested = np.array([0, 1, 0, 1, 0, 1])
        assert hdfe.absorbed_dof([f], cluster_codes=not_nested) == (3, False)


class TestFWL:
    @pytest.mark.parametrize("seed", range(10))
    def test_absorbed_equals_dummy_ols(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(80, 300))
        f1_codes = rng.integers(0, rng.integers(3, 12), n)
        f2_codes = rng.integers(0, rng.integers(3, 12), n)
        f1, f2 = factor("a", f1_codes), factor("b", f2_codes)
        keep = ~hdfe.singleton_mask([f1, f2])
        f1k, f2k = hdfe.reencode([f1, f2], keep)
        x = rng.normal(size=(n, 2))[keep]
        y = (x @ np.array([1.0, -2.0]) + rng.normal(size=n)[keep]
             + f1_codes[keep] * 0.5 - f2_codes[keep] * 0.3)
        dm = hdfe.demean(np.column_stack([y[:, None], x]), [f1k, f2k], tol=1e-13)
        beta_absorbed = np.linalg.lstsq(dm.values[:, 1:], dm.values[:, 0], rcond=None)[0]

        d1 = np.eye(f1k.n_groups)[f1k.codes]
        d2 = np.eye(f2k.n_groups)[f2k.codes][:, :-1]
        full = np.column_stack([x, d1, d2])
        beta_dummy = np.linalg.lstsq(full, y, rcond=None)[0][:2]
        assert np.allclose(beta_absorbed, beta_dummy, rtol=1e-8, atol=1e-10)
