import csv
import io

import numpy as np
import pytest
from scipy import stats

from mkvfit.errors import MKVError
from mkvfit.inference import SigmaEstimate
from mkvfit.models import ModelSpec, register_model
from mkvfit.montecarlo import (
    SEED_STRIDE,
    Cell,
    MCConfig,
    estimation_csv,
    estimation_table,
    normality_check,
    rejection_csv,
    rejection_rate,
    rejection_rate_table,
    rmse_bias_table,
    run_replications,
    table2_config,
)


def small_cfg(**kw):
    base = dict(model="linear", theta_true=(0.5, 1.0, 1.0), cells=[Cell(10, 5.0, 0.1), Cell(10, 5.0, 0.05)], replications=4, base_seed=3)
    base.update(kw)
    return MCConfig(**base)


class TestAggregation:
    def test_exact_estimates(self):
        rep = rmse_bias_table(np.tile([0.5, 1.0, 1.0], (5, 1)), (0.5, 1.0, 1.0))
        assert np.all(rep.rmse == 0) and np.all(rep.bias == 0)

    def test_symmetric_pair(self):
        rep = rmse_bias_table(np.array([[3.0], [1.0]]), (2.0,))
        assert rep.bias[0] == 0.0 and rep.rmse[0] == 1.0

    def test_failures_excluded(self):
        est = np.array([[1.0], [np.nan], [3.0]])
        rep = rmse_bias_table(est, (2.0,))
        assert rep.failures == 1 and rep.replications_used == 2 and rep.rmse[0] == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            rmse_bias_table(np.empty((0, 2)), (0.0, 0.0))
        with pytest.raises(ValueError):
            rmse_bias_table(np.full((3, 1), np.nan), (0.0,))

    def test_rejection_rate(self):
        z = np.array([0.0, 3.0, -2.5, 1.0])
        rate, se = rejection_rate(z, 0.05)
        assert rate == 0.5 and se == pytest.approx(0.25)

    def test_tiny_alpha_never_rejects(self, rng):
        # the critical value runs off to infinity as alpha shrinks
        rate, _ = rejection_rate(rng.normal(size=1000), 1e-15)
        assert rate == 0.0


class TestNormalityCheck:
    def test_exact_quantiles(self):
        R = 500
        z = stats.norm.ppf((np.arange(1, R + 1) - 0.5) / R)
        ks, p = normality_check(z, (0.0,), np.ones((R, 1)), 100, 0.1)[0]
        assert ks < 0.002 and p > 0.99

    def test_constant_sample(self):
        ks, _ = normality_check(np.full(100, 0.3), (0.0,), np.ones((100, 1)), 100, 0.1)[0]
        assert ks >= 0.5

    def test_sigma_estimate_input(self, rng):
        sig = SigmaEstimate(np.array([[2.0]]), np.array([[4.0]]))
        est = np.column_stack([rng.normal(0, 0.1, 200), rng.normal(1, np.sqrt(2 / 4 * 0.1 / 100), 200)])
        res = normality_check(est, (0.0, 1.0), sig, 100, 0.1)
        assert len(res) == 2 and all(p > 0.001 for _, p in res)

    def test_guards(self):
        with pytest.raises(ValueError):
            normality_check(np.zeros(10), (0.0,), np.ones((10, 1)), 10, 0.1)
        with pytest.raises(ValueError):
            normality_check(np.zeros(60), (0.0,), np.zeros((60, 1)), 10, 0.1)


class TestRunReplications:
    def test_seeds_are_documented(self):
        res = run_replications(small_cfg())
        for g, cell in enumerate(small_cfg().cells):
            assert res[cell].seeds.tolist() == [3 + g * SEED_STRIDE + r for r in range(4)]

    def test_shared_paths_share_seeds(self):
        res = run_replications(small_cfg(share_paths=True))
        a, b = (res[c].seeds for c in small_cfg().cells)
        assert np.array_equal(a, b)

    def test_noise_free_recovers_drift(self):
        cfg = MCConfig("linear", (0.5, 1.0, 0.0), [Cell(5, 2.0, 0.01)], 1, 0, mu0="gaussian:0,1")
        est = run_replications(cfg)[cfg.cells[0]].estimates[0]
        # with a = 0 the Euler panel satisfies the discrete model exactly; the
        # zero variance estimate is held at the lower edge of the default box
        assert np.allclose(est[:2], [0.5, 1.0], atol=1e-9)
        assert est[2] <= 1e-6

    def test_worker_count_does_not_matter(self):
        one = run_replications(small_cfg(workers=1))
        two = run_replications(small_cfg(workers=2))
        for cell in one:
            assert np.array_equal(one[cell].estimates, two[cell].estimates)

    def test_all_failures_is_an_error(self):
        register_model("mc_broken", lambda: ModelSpec(
            "mc_broken", 1, 1, lambda t, x, c: np.full(np.shape(x), np.nan), lambda t, x, c: np.ones(np.shape(x))
        ))
        cfg = MCConfig("mc_broken", (0.0, 1.0), [Cell(3, 1.0, 0.5)], 2, 0)
        with pytest.raises(MKVError):
            run_replications(cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            small_cfg(replications=0)
        with pytest.raises(ValueError):
            small_cfg(cells=[])

    def test_with_se_and_z(self):
        res = run_replications(small_cfg(with_se=True, test_alpha=0.05))
        r = next(iter(res.values()))
        assert r.se.shape == (4, 3) and np.all(r.se > 0) and np.all(np.isfinite(r.z))


class TestTables:
    def test_estimation_csv_schema(self):
        reports = estimation_table(small_cfg())
        rows = list(csv.reader(io.StringIO(estimation_csv(reports, ("theta11", "theta12", "theta2")))))
        assert rows[0] == ["N", "T", "delta_n", "component", "rmse", "bias", "failures"]
        assert len(rows) == 1 + 2 * 3

    def test_rejection_csv_schema(self):
        cfg = table2_config(replications=3, seed=0, cells=[Cell(10, 5.0, 0.1, (0.5, t, 1.0)) for t in (0.0, 1.0)])
        text = rejection_csv(rejection_rate_table(cfg, 0.05))
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == ["theta12", "N", "T", "reject_rate_pct", "se_pct"]
        assert [r[0] for r in rows[1:]] == ["0", "1"]


@pytest.mark.invariant
class TestMonteCarloInvariants:
    def test_rmse_dominates_bias(self, rng):
        for _ in range(200):
            est = rng.normal(rng.normal(), rng.uniform(0.01, 3), size=(int(rng.integers(1, 30)), 3))
            rep = rmse_bias_table(est, rng.normal(size=3))
            assert np.all(rep.rmse**2 - rep.bias**2 >= -1e-12)

    def test_order_independence(self, rng):
        est = rng.normal(size=(40, 3))
        a = rmse_bias_table(est, (0.1, 0.2, 0.3))
        b = rmse_bias_table(est[rng.permutation(40)], (0.1, 0.2, 0.3))
        np.testing.assert_allclose(a.rmse, b.rmse, rtol=1e-14)
        np.testing.assert_allclose(a.bias, b.bias, rtol=1e-12, atol=1e-15)
        z = rng.normal(size=50)
        assert rejection_rate(z, 0.05) == rejection_rate(z[::-1], 0.05)

    def test_determinism(self):
        a, b = run_replications(small_cfg()), run_replications(small_cfg())
        for cell in a:
            assert a[cell].estimates.tobytes() == b[cell].estimates.tobytes()

    def test_rejection_monotone_in_interaction(self):
        cfg = table2_config(replications=40, seed=5, cells=[Cell(20, 20.0, 0.1, (0.5, t, 1.0)) for t in (0.0, 0.25, 0.5, 1.0)])
        reps = rejection_rate_table(cfg, 0.05)
        for lo, hi in zip(reps, reps[1:]):
            assert hi.rejection_rate >= lo.rejection_rate - 2 * max(lo.rejection_se, hi.rejection_se, 1e-12)
