import math

import numpy as np
import pytest

from mkvfit.errors import AssumptionViolation, ModelEvaluationError
from mkvfit.measure import ParticleState
from mkvfit.models import (
    ModelSpec,
    ParamBox,
    ThetaVector,
    available_models,
    builtin_model,
    eval_diffusion,
    eval_drift,
    register_model,
)


def _opinion_reference(t11, t12, x, cloud):
    # direct numpy transcription of the mollified window drift
    d = x[:, None] - cloud[None, :]
    u = np.abs(d) - t11
    v = 1.0 - u**2
    with np.errstate(divide="ignore", over="ignore"):
        phi = np.where(v > 0, t12 * np.exp(-0.01 / np.where(v > 0, v, 1.0)), 0.0)
    return -np.mean(phi * d, axis=1)


# in-range parameters per catalog model (name, options, theta, spread)
CATALOG = [
    ("linear", {}, (0.5, 1.0, 1.0)),
    ("opinion_smooth", {}, (-0.5, 2.0, 0.04)),
    ("opinion_indicator", {"width": 0.05}, (1.0, 1.0, 0.5)),
    ("kuramoto", {}, (1.0, 0.5)),
    ("pearson_meanfield", {}, (0.2, 0.3, 1.0, 0.3)),
    ("meanfield_ou", {}, (0.2, 0.3, 1.0, 0.5, 0.2)),
]


def _random_theta(model, theta0, rng):
    t0 = np.asarray(theta0, dtype=float)
    th = t0 + rng.uniform(-0.3, 0.3, t0.size) * (np.abs(t0) + 0.1)
    pos = list(model.positive)
    th[pos] = t0[pos] * np.exp(rng.uniform(-0.3, 0.3, len(pos)))
    return th


class TestTypes:
    def test_theta_vector_layout(self):
        th = ThetaVector.from_flat([0.5, 1.0, 2.0], 2)
        assert th.p1 == 2 and th.p2 == 1
        assert th.flat.tolist() == [0.5, 1.0, 2.0]

    def test_theta_vector_needs_both_parts(self):
        with pytest.raises(ValueError):
            ThetaVector.from_flat([0.5, 1.0], 2)

    def test_box_ordering(self):
        with pytest.raises(ValueError):
            ParamBox([0.0, 1.0], [1.0, 1.0])

    def test_box_contains_and_clip(self):
        box = ParamBox([0.0, -1.0], [1.0, 1.0])
        assert box.contains([0.5, 0.0])
        assert not box.contains([1.5, 0.0])
        assert box.clip([2.0, -3.0]).tolist() == [1.0, -1.0]

    def test_model_theta_length(self):
        with pytest.raises(ValueError):
            builtin_model("linear").theta([1.0, 2.0])


class TestEvalDrift:
    def test_linear_hand_value(self):
        assert eval_drift(builtin_model("linear"), [0.5, 1.0], 0, ParticleState(np.array([1.0, 3.0]))) == 0.5

    def test_kuramoto_synchronized(self):
        assert eval_drift(builtin_model("kuramoto"), [2.0], 1, np.full(5, 0.7)) == pytest.approx(0.0, abs=1e-15)

    def test_opinion_outside_window(self):
        t11 = -0.5
        # every neighbour farther than t11 + 1 = 0.5
        cloud = np.array([0.0, 0.6, -0.7, 1.5])
        assert eval_drift(builtin_model("opinion_smooth"), [t11, 2.0], 0, cloud) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ModelEvaluationError):
            eval_drift(builtin_model("linear"), [0.5], 0, np.array([1.0, 2.0]))

    def test_non_finite_output(self):
        model = ModelSpec("bad", 1, 1, lambda t, x, c: np.full(np.shape(x), np.inf), lambda t, x, c: np.ones(np.shape(x)))
        with pytest.raises(ModelEvaluationError) as info:
            eval_drift(model, [1.0], 1, np.array([0.0, 1.0]))
        assert info.value.index == 1


class TestEvalDiffusion:
    def test_linear_constant(self, rng):
        assert eval_diffusion(builtin_model("linear"), [1.0], 2, rng.normal(size=5)) == 1.0

    def test_meanfield_ou_hand_value(self):
        val = eval_diffusion(builtin_model("meanfield_ou"), [1.0, 2.0], 0, np.array([3.0, 4.0]))
        assert val == pytest.approx(1.0 + 2.0 * math.sqrt((9 + 16) / 2), rel=1e-15)

    def test_pearson_origin(self):
        assert eval_diffusion(builtin_model("pearson_meanfield"), [2.0], 0, np.array([0.0, 5.0])) == 2.0

    def test_non_positive(self):
        with pytest.raises(AssumptionViolation):
            eval_diffusion(builtin_model("kuramoto"), [0.0], 0, np.array([0.0, 1.0]))
        with pytest.raises(AssumptionViolation):
            eval_diffusion(builtin_model("kuramoto"), [-1.0], 0, np.array([0.0, 1.0]))


class TestCatalog:
    def test_linear(self):
        m = builtin_model("linear")
        assert (m.p1, m.p2, m.closed_form) == (2, 1, "linear_model")

    def test_opinion_smooth(self):
        m = builtin_model("opinion_smooth")
        assert (m.p1, m.p2, m.closed_form) == (2, 1, "multiplicative_theta2")

    def test_kuramoto(self):
        m = builtin_model("kuramoto")
        assert (m.p1, m.p2) == (1, 1)

    def test_analytic_grads(self):
        assert builtin_model("linear").has_analytic_grads
        assert builtin_model("opinion_smooth").has_analytic_grads

    def test_exact_indicator_has_no_gradient(self):
        m = builtin_model("opinion_indicator")
        assert not m.differentiable and not m.has_analytic_grads

    def test_unknown(self):
        with pytest.raises(KeyError):
            builtin_model("nope")

    def test_register_custom(self):
        def factory():
            return ModelSpec("drift_only", 1, 1, lambda t, x, c: t[0] * np.ones(np.shape(x)), lambda t, x, c: np.full(np.shape(x), t[0]))

        register_model("drift_only", factory)
        assert "drift_only" in available_models()
        assert eval_drift(builtin_model("drift_only"), [2.0], 0, np.zeros(3)) == 2.0
        with pytest.raises(ValueError):
            register_model("linear", factory)


class TestOpinionKernels:
    def test_matches_numpy_reference(self, rng):
        m = builtin_model("opinion_smooth")
        x = rng.normal(size=40)
        ref = _opinion_reference(-0.5, 2.0, x, x)
        np.testing.assert_allclose(m.drift(np.array([-0.5, 2.0]), x, x), ref, rtol=1e-12, atol=1e-15)

    def test_self_and_cross_paths_agree(self, rng):
        m = builtin_model("opinion_smooth")
        t1 = np.array([0.2, 1.5])
        x = rng.normal(size=(25, 6))
        same = m.drift(t1, x, x)
        cross = m.drift(t1, x, x.copy())
        np.testing.assert_allclose(same, cross, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(m.grad_drift_theta1(t1, x, x), m.grad_drift_theta1(t1, x, x.copy()), rtol=1e-10, atol=1e-14)

    def test_indicator_exact_window(self):
        m = builtin_model("opinion_indicator")
        cloud = np.array([0.0, 0.5, 2.0])
        # height 1, radius 1: particle 0 sees 0 and 0.5, not 2
        assert eval_drift(m, [1.0, 1.0], 0, cloud) == pytest.approx(-(0.0 - 0.5) / 3)


@pytest.mark.invariant
class TestModelInvariants:
    @pytest.mark.parametrize("name,opts,theta0", CATALOG)
    def test_gradients_match_finite_differences(self, name, opts, theta0, rng):
        m = builtin_model(name, **opts)
        for _ in range(10):
            th = _random_theta(m, theta0, rng)
            cloud = rng.normal(size=15)
            x = cloud.copy()
            t1, t2 = th[: m.p1], th[m.p1 :]
            g1 = np.asarray(m.grad_drift_theta1(t1, x, cloud))
            g2 = np.asarray(m.grad_diffusion_theta2(t2, x, cloud))
            for k in range(m.p1):
                h = 1e-6 * (1 + abs(t1[k]))
                e = np.zeros(m.p1)
                e[k] = h
                fd = (m.drift(t1 + e, x, cloud) - m.drift(t1 - e, x, cloud)) / (2 * h)
                scale = max(np.max(np.abs(g1[k])), 1e-8)
                assert np.max(np.abs(g1[k] - fd)) / scale < 1e-6
            for k in range(m.p2):
                h = 1e-6 * (1 + abs(t2[k]))
                e = np.zeros(m.p2)
                e[k] = h
                fd = (m.diffusion(t2 + e, x, cloud) - m.diffusion(t2 - e, x, cloud)) / (2 * h)
                assert np.max(np.abs(g2[k] - fd)) / max(np.max(np.abs(g2[k])), 1e-8) < 1e-6

    @pytest.mark.parametrize("name,opts,theta0", CATALOG)
    def test_kernel_form_reproduces_diffusion(self, name, opts, theta0, rng):
        m = builtin_model(name, **opts)
        spec = m.kernel_diffusion(np.asarray(theta0[m.p1 :]))
        for _ in range(100):
            cloud = rng.normal(size=int(rng.integers(1, 12)))
            i = int(rng.integers(cloud.size))
            direct = eval_diffusion(m, theta0[m.p1 :], i, cloud)
            assert spec.evaluate(cloud[i : i + 1], cloud)[0] == pytest.approx(direct, rel=1e-14, abs=0)

    @pytest.mark.parametrize("name,opts,theta0", CATALOG)
    def test_permutation_equivariance(self, name, opts, theta0, rng):
        m = builtin_model(name, **opts)
        for _ in range(20):
            cloud = rng.normal(size=9)
            perm = rng.permutation(9)
            for i in range(9):
                j = int(np.flatnonzero(perm == i)[0])
                assert eval_drift(m, theta0[: m.p1], i, cloud) == pytest.approx(
                    eval_drift(m, theta0[: m.p1], j, cloud[perm]), rel=1e-12, abs=1e-15
                )
                assert eval_diffusion(m, theta0[m.p1 :], i, cloud) == pytest.approx(
                    eval_diffusion(m, theta0[m.p1 :], j, cloud[perm]), rel=1e-12
                )

    @pytest.mark.parametrize("name,opts,theta0", CATALOG)
    def test_evaluators_are_pure(self, name, opts, theta0, rng):
        m = builtin_model(name, **opts)
        cloud = rng.normal(size=11)
        before = cloud.copy()
        a = m.drift(np.asarray(theta0[: m.p1]), cloud, cloud)
        b = m.drift(np.asarray(theta0[: m.p1]), cloud, cloud)
        assert np.array_equal(a, b) and np.array_equal(cloud, before)

    @pytest.mark.parametrize("name,opts,theta0", CATALOG)
    def test_diffusion_positive_in_box(self, name, opts, theta0, rng):
        m = builtin_model(name, **opts)
        box = m.default_box
        for _ in range(50):
            th = box.lower + rng.uniform(size=m.p) * box.width
            cloud = rng.normal(size=6)
            assert eval_diffusion(m, th[m.p1 :], 0, cloud) > 0
