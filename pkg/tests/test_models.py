import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catapult.models import (
    DeepReluNet,
    HomogenousNet,
    ModelError,
    QuadraticModel,
    linear_net_with_bias_embedding,
    relu_project,
)
from catapult.numerics import Rng
from conftest import (
    analytic_gradient,
    finite_difference_gradient,
    pure_toy_quadratic,
    random_quadratic,
    with_bias_toy_quadratic,
)

EXCHANGE = np.array([[0.0, 1.0], [1.0, 0.0]])


def exchange_pure_model(theta=(1.0, 1.0), zeta=1.0) -> QuadraticModel:
    return QuadraticModel(
        theta=list(theta),
        features=np.zeros((1, 2)),
        meta_features=EXCHANGE[None, :, :],
        zeta=zeta,
        variant="pure",
    )


class TestQuadraticModel:
    def test_zero_weights_zero_output(self):
        m = exchange_pure_model(theta=(0.0, 0.0), zeta=0.7)
        assert m.outputs()[0] == 0.0

    def test_linear_reduction(self):
        phi = np.zeros((1, 3))
        phi[0, 0] = 1.0
        m = QuadraticModel(
            theta=[3.0, 0.0, 0.0],
            features=phi,
            meta_features=np.zeros((1, 3, 3)),
            zeta=0.0,
            variant="with_bias",
        )
        assert m.outputs()[0] == 3.0

    def test_exchange_quadratic_form(self):
        assert exchange_pure_model().outputs()[0] == pytest.approx(1.0)

    def test_ntk_static_at_zero_coupling(self):
        rng = Rng(0)
        phi = rng.normal((3, 8))
        m = QuadraticModel(
            theta=rng.normal(8),
            features=phi,
            meta_features=np.zeros((3, 8, 8)),
            zeta=0.0,
            variant="with_bias",
        )
        expected = phi @ phi.T / 3.0
        assert np.allclose(m.ntk(), expected, atol=1e-14)
        m.theta[:] = rng.normal(8)
        assert np.allclose(m.ntk(), expected, atol=1e-14)

    def test_pure_single_point_kernel_formula(self):
        # kernel equals zeta^2 theta (psi psi) theta at one datapoint
        m = pure_toy_quadratic(24, seed=5)
        psi = m.meta_features[0]
        expected = m.zeta**2 * float(m.theta @ (psi @ (psi @ m.theta)))
        assert float(m.ntk()[0, 0]) == pytest.approx(expected, rel=1e-12)

    def test_exchange_kernel_is_theta_norm(self):
        # psi @ psi is the identity for the exchange matrix
        assert float(exchange_pure_model().ntk()[0, 0]) == pytest.approx(2.0)

    def test_gradient_zero_at_zero_errors(self):
        m = pure_toy_quadratic(16, seed=3)
        assert np.abs(m.grad_theta(np.zeros(1))).max() == 0.0

    def test_exchange_gradient(self):
        m = exchange_pure_model()
        z = m.outputs()
        grad = m.grad_theta(z - 0.0)
        assert np.allclose(grad, [1.0, 1.0])

    @pytest.mark.parametrize(
        "builder",
        [
            lambda: random_quadratic(16, 0, 2, 4, seed=21)[0:2],
            lambda: random_quadratic(16, 4, 2, 4, seed=22)[0:2],
            lambda: random_quadratic(32, 0, 3, 8, seed=23, activation="tanh")[0:2],
        ],
    )
    def test_gradient_matches_finite_differences(self, builder):
        model, dataset = builder()
        analytic = analytic_gradient(model, dataset)
        numeric = finite_difference_gradient(model, dataset)
        denom = max(np.linalg.norm(analytic), 1e-12)
        assert np.linalg.norm(analytic - numeric) / denom < 1e-5

    def test_pure_variant_rejects_nonzero_features(self):
        with pytest.raises(ModelError):
            QuadraticModel(
                theta=[1.0],
                features=[[1.0]],
                meta_features=np.zeros((1, 1, 1)),
                zeta=1.0,
                variant="pure",
            )

    def test_with_bias_rejects_overlapping_features(self):
        psi = np.eye(2)[None, :, :]
        with pytest.raises(ModelError):
            QuadraticModel(
                theta=[1.0, 1.0],
                features=[[1.0, 0.0]],
                meta_features=psi,
                zeta=1.0,
                variant="with_bias",
            )

    def test_rejects_asymmetric_meta_features(self):
        psi = np.array([[[0.0, 1.0], [0.5, 0.0]]])
        with pytest.raises(ModelError):
            QuadraticModel(
                theta=[1.0, 1.0],
                features=np.zeros((1, 2)),
                meta_features=psi,
                zeta=1.0,
                variant="generic",
            )

    @given(st.floats(-3.0, 3.0), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_pure_homogeneity_weight_two(self, scale, seed):
        m = pure_toy_quadratic(12, seed=seed % 1000)
        z = m.outputs()[0]
        scaled = m.clone()
        scaled.theta[:] = scale * m.theta
        assert scaled.outputs()[0] == pytest.approx(scale**2 * z, rel=1e-10, abs=1e-12)

    def test_with_bias_orthogonality_preserved_after_assembly(self):
        m = with_bias_toy_quadratic(16, 4, seed=9)
        overlap = np.einsum("aij,bj->abi", m.meta_features, m.features)
        assert np.abs(overlap).max() <= 1e-12


class TestHomogenousNet:
    def test_zero_second_layer(self):
        net = HomogenousNet(u=np.ones((4, 1)), v=np.zeros(4), a_minus=0.5, a_plus=1.0)
        assert net.outputs([[1.0]])[0] == 0.0

    def test_single_neuron_forward(self):
        net = HomogenousNet(u=np.array([2.0]), v=np.array([3.0]), a_minus=0.0, a_plus=1.0)
        assert net.outputs([[1.0]])[0] == pytest.approx(6.0)

    def test_single_neuron_kernel(self):
        net = HomogenousNet(u=np.array([2.0]), v=np.array([3.0]), a_minus=0.0, a_plus=1.0)
        assert float(net.ntk([[1.0]])[0, 0]) == pytest.approx(13.0)

    def test_kernel_formula_single_datapoint(self):
        rng = Rng(17)
        net = HomogenousNet.init_random(32, rng, a_minus=0.25, a_plus=1.0)
        pre = net.u[:, 0]
        act = np.where(pre >= 0, net.a_plus * pre, net.a_minus * pre)
        slope = np.where(pre > 0, net.a_plus, np.where(pre < 0, net.a_minus, 0.625))
        expected = float((act @ act + (net.v * slope) @ (net.v * slope)) / 32.0)
        assert float(net.ntk([[1.0]])[0, 0]) == pytest.approx(expected, rel=1e-12)

    @given(st.floats(0.01, 10.0), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_positive_homogeneity_weight_two(self, scale, seed):
        net = HomogenousNet.init_random(16, Rng(seed), a_minus=0.5, a_plus=1.0, input_dim=2)
        x = Rng(seed + 1).normal((3, 2))
        z = net.outputs(x)
        scaled = net.clone()
        scaled.u *= scale
        scaled.v *= scale
        assert np.allclose(scaled.outputs(x), scale**2 * z, rtol=1e-10, atol=1e-12)

    def test_monte_carlo_initial_kernel_mean(self):
        # E[H0] = a_minus^2 + a_plus^2 on the unit datapoint
        a_minus, a_plus = 0.5, 1.0
        samples = np.array(
            [
                float(
                    HomogenousNet.init_random(64, Rng(seed), a_minus, a_plus).ntk(
                        [[1.0]]
                    )[0, 0]
                )
                for seed in range(2000)
            ]
        )
        target = a_minus**2 + a_plus**2
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - target) < 3.0 * stderr

    def test_gradient_matches_finite_differences(self):
        rng = Rng(31)
        net = HomogenousNet.init_random(24, rng, a_minus=0.5, a_plus=1.0, input_dim=3)
        from catapult.datasets import Dataset

        dataset = Dataset(
            inputs=rng.child(1).normal((6, 3)), labels=rng.child(2).normal(6)
        )
        analytic = analytic_gradient(net, dataset)
        numeric = finite_difference_gradient(net, dataset)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic) < 1e-5

    def test_slope_ordering_enforced(self):
        with pytest.raises(ModelError):
            HomogenousNet(u=np.ones((2, 1)), v=np.ones(2), a_minus=1.0, a_plus=0.5)

    def test_kernel_psd_multi_point(self):
        rng = Rng(40)
        net = HomogenousNet.init_random(32, rng, a_minus=0.5, a_plus=1.0, input_dim=4)
        h = net.ntk(rng.child(1).normal((8, 4)))
        assert np.array_equal(h, h.T)
        evals = np.linalg.eigvalsh(h)
        assert evals.min() >= -1e-8 * max(1.0, evals.max())


class TestReluProjector:
    def test_decomposition_of_mixed_signs(self):
        net = HomogenousNet(
            u=np.array([1.0, -2.0, 3.0]), v=np.ones(3), a_minus=0.0, a_plus=1.0
        )
        split = relu_project(net)
        assert np.array_equal(split.u_plus, [1.0, 0.0, 3.0])
        assert np.array_equal(split.u_minus, [0.0, -2.0, 0.0])
        assert np.array_equal(split.p_plus, [True, False, True])
        assert np.array_equal(split.u_plus + split.u_minus, net.u[:, 0])

    def test_all_positive_weights(self):
        net = HomogenousNet(
            u=np.array([0.5, 1.5]), v=np.array([2.0, -1.0]), a_minus=0.0, a_plus=1.0
        )
        net.frozen_split = relu_project(net)
        assert np.array_equal(net.frozen_split.u_minus, [0.0, 0.0])
        assert net.reduced_weight_norm() == pytest.approx(net.weight_norm())

    def test_zero_goes_to_plus_side(self):
        net = HomogenousNet(
            u=np.array([0.0, -1.0]), v=np.ones(2), a_minus=0.0, a_plus=1.0
        )
        split = relu_project(net)
        assert split.p_plus[0] and not split.p_plus[1]

    def test_sign_fraction_near_half(self):
        n = 100_000
        net = HomogenousNet(
            u=Rng(77).normal(n), v=np.ones(n), a_minus=0.0, a_plus=1.0
        )
        fraction = relu_project(net).p_plus.mean()
        assert abs(fraction - 0.5) < 3.0 * 0.5 / math.sqrt(n)

    def test_requires_one_dimensional_inputs(self):
        net = HomogenousNet.init_random(8, Rng(1), 0.0, 1.0, input_dim=2)
        with pytest.raises(ModelError):
            relu_project(net)


class TestWeightNorm:
    def test_three_four_five(self):
        m = QuadraticModel(
            theta=[3.0, 4.0],
            features=np.zeros((1, 2)),
            meta_features=np.zeros((1, 2, 2)),
            zeta=1.0,
            variant="pure",
        )
        assert m.weight_norm() == 25.0

    def test_two_layer_norm(self):
        net = HomogenousNet(
            u=np.array([1.0, 2.0]), v=np.array([2.0, 0.0]), a_minus=0.5, a_plus=1.0
        )
        assert net.weight_norm() == 9.0

    def test_monte_carlo_expected_norm(self):
        n = 64
        samples = np.array(
            [
                HomogenousNet.init_random(n, Rng(seed), 0.5, 1.0).weight_norm()
                for seed in range(2000)
            ]
        )
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - 2 * n) < 3.0 * stderr

    def test_deep_net_counts_every_layer(self):
        net = DeepReluNet(
            input_weights=np.ones((2, 3)),
            hidden_weights=[2.0 * np.ones((2, 2))],
            output_weights=np.array([1.0, -1.0]),
        )
        assert net.weight_norm() == 6.0 + 16.0 + 2.0


class TestDeepReluNet:
    def test_depth_zero_matches_homogenous_relu(self):
        rng = Rng(50)
        u = rng.normal((16, 3))
        v = rng.child(1).normal(16)
        deep = DeepReluNet(input_weights=u.copy(), hidden_weights=[], output_weights=v.copy())
        shallow = HomogenousNet(u=u.copy(), v=v.copy(), a_minus=0.0, a_plus=1.0)
        x = rng.child(2).normal((5, 3))
        assert np.allclose(deep.outputs(x), shallow.outputs(x), atol=1e-14)
        assert np.allclose(deep.ntk(x), shallow.ntk(x), atol=1e-14)

    def test_single_chain_kernel_in_linear_region(self):
        # all-positive weights and a positive input keep every ReLU active,
        # so the gradient factors are plain weight products
        u, w, v, x = 0.7, 1.3, 2.1, 1.9
        net = DeepReluNet(
            input_weights=np.array([[u]]),
            hidden_weights=[np.array([[w]])],
            output_weights=np.array([v]),
        )
        z = net.outputs([[x]])[0]
        assert z == pytest.approx(v * w * u * x)
        expected = (w * u * x) ** 2 + (v * u * x) ** 2 + (v * w * x) ** 2
        assert float(net.ntk([[x]])[0, 0]) == pytest.approx(expected, rel=1e-12)

    def test_kernel_psd_random(self):
        rng = Rng(51)
        net = DeepReluNet.init_random(32, 6, 1, rng)
        h = net.ntk(rng.child(1).normal((8, 6)))
        evals = np.linalg.eigvalsh(h)
        assert evals.min() >= -1e-8 * max(evals.max(), 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = Rng(52)
        net = DeepReluNet.init_random(10, 4, 1, rng)
        from catapult.datasets import Dataset

        dataset = Dataset(
            inputs=rng.child(1).normal((5, 4)), labels=rng.child(2).normal(5)
        )
        analytic = analytic_gradient(net, dataset)
        numeric = finite_difference_gradient(net, dataset)
        assert np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic) < 1e-5

    def test_rejects_unsupported_depth(self):
        with pytest.raises(ModelError):
            DeepReluNet.init_random(8, 2, 2, Rng(0))

    def test_kernel_matches_streamed_per_sample_gradients(self):
        # oracle: assemble the kernel from explicit per-sample gradients
        rng = Rng(53)
        net = DeepReluNet.init_random(6, 3, 1, rng)
        x = rng.child(1).normal((4, 3))
        from conftest import params_vector

        grads = []
        for i in range(4):
            work = net.clone()
            # unit error turns the step into the raw output gradient
            work.apply_gd_step(x[i : i + 1], np.ones(1), 1.0)
            grads.append(params_vector(net) - params_vector(work))
        jac = np.stack(grads)
        expected = jac @ jac.T / 4.0
        assert np.allclose(net.ntk(x), expected, atol=1e-12)


class TestLinearNetWithBiasEmbedding:
    def test_output_matches_explicit_network(self):
        width = 12
        m = linear_net_with_bias_embedding(width, Rng(4), bias0=0.3)
        u = m.theta[:width]
        v = m.theta[width : 2 * width]
        b = m.theta[-1]
        assert b == 0.3
        expected = float(u @ v) / math.sqrt(width) + b
        assert m.outputs()[0] == pytest.approx(expected, rel=1e-12)

    def test_kernel_is_norm_over_width_plus_one(self):
        width = 12
        m = linear_net_with_bias_embedding(width, Rng(4), bias0=0.0)
        u = m.theta[:width]
        v = m.theta[width : 2 * width]
        expected = (u @ u + v @ v) / width + 1.0
        assert float(m.ntk()[0, 0]) == pytest.approx(expected, rel=1e-12)

    def test_is_valid_with_bias_model(self):
        m = linear_net_with_bias_embedding(6, Rng(5))
        assert m.variant == "with_bias"
        assert m.zeta == pytest.approx(1.0 / math.sqrt(6))


class TestKernelSymmetryInvariant:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_symmetry_everywhere(self, seed):
        model, dataset = random_quadratic(16, 4, 2, 6, seed=seed)
        h = model.ntk()
        assert np.array_equal(h, h.T)
        net = HomogenousNet.init_random(16, Rng(seed), 0.5, 1.0, input_dim=2)
        h = net.ntk(dataset.inputs)
        assert np.array_equal(h, h.T)
        evals = np.linalg.eigvalsh(model.ntk())
        assert evals.min() >= -1e-8 * max(1.0, evals.max())
