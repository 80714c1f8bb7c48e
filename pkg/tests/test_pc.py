import numpy as np
import pytest

from pcmdl.analytic import ScalarInstance, VectorInstance, scalar_pc_iterate, vector_pc_iterate
from pcmdl.errors import UnsupportedArchitecture
from pcmdl.model import (
    Dataset,
    GaussianPrior,
    LatentState,
    NetworkParams,
    codelength,
    codelength_gradient,
    energy_latent_gradient,
    pcn_energy,
)
from pcmdl.numerics import finite_diff_gradient
from pcmdl.pc import (
    PcConfig,
    PcMode,
    estimate_block_lipschitz,
    exact_layer_solve,
    inexact_layer_solve,
    infer_exact_single_hidden,
    infer_latents,
    infer_step,
    pc_sweep,
    pc_train,
    weight_step,
)

from conftest import make_problem


def net(*layers, activation="identity"):
    return NetworkParams(tuple(np.atleast_2d(np.asarray(t, dtype=float)) for t in layers), activation)


def block_objective(theta, H, V, alpha, s2, A=None):
    pred = H @ theta.T if A is None else H @ theta.T @ A.T
    return 0.5 * np.sum((V - pred) ** 2) / s2 + 0.5 * alpha * np.sum(theta**2)


class TestInference:
    def test_consistent_latent_is_fixed(self, problem):
        params, data, _ = problem
        lat = LatentState.from_forward(params, data.inputs)
        out = infer_step(lat, params, 0.5)
        for a, b in zip(out.values, lat.values):
            np.testing.assert_array_equal(a, b)

    def test_scalar_chain_converges_to_midpoint(self):
        p = net([[0.0]], [[1.0]])
        lat = LatentState.from_values(p, [[[1.0]], [[0.0]], [[1.0]]])
        lat, _ = infer_latents(lat, p, 0.1, 500, tol=1e-14)
        assert lat.values[1][0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_small_steps_do_not_raise_energy(self):
        for seed in range(100):
            params, data, prior = make_problem(seed, dims=(2, 3, 2, 1), activation="softplus" if seed % 2 else "identity",
                                               N=4, init_std=1.0)
            g = np.random.default_rng(seed)
            lat = LatentState.from_values(params, [data.inputs, g.standard_normal((4, 3)),
                                                   g.standard_normal((4, 2)), data.targets])
            after = infer_step(lat, params, 1e-3)
            assert pcn_energy(params, after, prior) <= pcn_energy(params, lat, prior)

    def test_clamped_layers_untouched(self, problem):
        params, data, _ = problem
        lat = LatentState.from_values(params, [data.inputs, np.zeros((data.N, 2)), data.targets])
        out = infer_step(lat, params, 0.3)
        np.testing.assert_array_equal(out.values[0], data.inputs)
        np.testing.assert_array_equal(out.values[-1], data.targets)


class TestExactInference:
    def test_consistent_data(self):
        lat = infer_exact_single_hidden(net([[1.0]], [[1.0]]), [[1.0]], [[1.0]])
        assert lat.values[1][0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_vector_instance_value(self):
        p = net([[1 / 3, 0.0]], [[1.0]])
        lat = infer_exact_single_hidden(p, [[1.0, 0.0]], [[1.0]])
        assert lat.values[1][0, 0] == pytest.approx(2 / 3, abs=1e-15)

    def test_zero_case(self):
        lat = infer_exact_single_hidden(net([[0.0, 0.0]], [[1.0]]), [[1.0, 0.0]], [[0.0]])
        assert lat.values[1][0, 0] == 0.0

    @pytest.mark.parametrize("activation", ["identity", "softplus"])
    def test_latent_gradient_vanishes(self, activation):
        params, data, prior = make_problem(12, dims=(2, 3, 2), activation=activation, N=9, init_std=1.0)
        lat = infer_exact_single_hidden(params, data.inputs, data.targets)
        assert np.abs(energy_latent_gradient(params, lat, prior)[0]).max() <= 1e-10

    def test_deeper_nets_rejected(self):
        params, data, _ = make_problem(0, dims=(2, 2, 2, 1))
        with pytest.raises(UnsupportedArchitecture):
            infer_exact_single_hidden(params, data.inputs, data.targets)


class TestWeightStep:
    def test_zero_error_fixed_point(self, problem):
        params, data, _ = problem
        lat = LatentState.from_forward(params, data.inputs)
        out = weight_step(params, lat, 0.1)
        np.testing.assert_array_equal(out.flatten(), params.flatten())

    def test_single_layer_unrolled(self):
        p = net([[0.5, -1.0]])
        h = np.array([[2.0, 1.0]])
        lat = LatentState.from_values(p, [h, [[3.0]]])
        r = lat.errors[0]
        out = weight_step(p, lat, 0.1)
        # the step moves along +r h^T, which lowers the squared error
        np.testing.assert_allclose(out.layers[0] - p.layers[0], 0.1 * r.T @ h, atol=1e-15)

    @pytest.mark.parametrize("activation", ["identity", "softplus"])
    def test_descends_error_energy(self, activation):
        params, data, _ = make_problem(5, dims=(2, 3, 2), activation=activation, N=4, init_std=0.9)
        g = np.random.default_rng(3)
        vals = [data.inputs, g.standard_normal((4, 3)), data.targets]
        lat = LatentState.from_values(params, vals)

        def err_energy(v):
            p = params.unflatten(v)
            return 0.5 * sum(float(np.sum(e * e)) for e in LatentState.from_values(p, vals).errors)

        eta = 0.01
        expected = params.flatten() - eta * finite_diff_gradient(err_energy, params.flatten())
        np.testing.assert_allclose(weight_step(params, lat, eta).flatten(), expected, atol=1e-6)

    def test_locality(self):
        params, data, _ = make_problem(7, dims=(2, 3, 3, 1), activation="softplus", N=5, init_std=0.8)
        g = np.random.default_rng(4)
        vals = [data.inputs, g.standard_normal((5, 3)), g.standard_normal((5, 3)), data.targets]
        lat = LatentState.from_values(params, vals)
        full = weight_step(params, lat, 0.05)
        for l in range(3):
            masked = LatentState(lat.values, [e if k == l else np.zeros_like(e) for k, e in enumerate(lat.errors)])
            np.testing.assert_array_equal(weight_step(params, masked, 0.05).layers[l], full.layers[l])


class TestExactLayerSolve:
    def test_zero_targets(self, rng):
        theta = exact_layer_solve(rng.standard_normal((10, 3)), np.zeros((10, 2)), 1.0, 1.0)
        np.testing.assert_array_equal(theta, np.zeros((2, 3)))

    def test_scalar_learning_step(self):
        x, v, alpha, s2 = 1.5, 0.7, 2.0, 0.3
        theta = exact_layer_solve([[x]], [[v]], alpha, s2)
        assert theta[0, 0] == pytest.approx(x * v / (x * x + alpha * s2), abs=1e-15)

    def test_matches_long_gradient_descent(self, rng):
        H = rng.standard_normal((12, 2))
        V = rng.standard_normal((12, 3))
        alpha, s2 = 0.7, 0.4
        theta = np.zeros((3, 2))
        step = 1.0 / (np.linalg.eigvalsh(H.T @ H).max() / s2 + alpha)
        for _ in range(20000):
            grad = -(V - H @ theta.T).T @ H / s2 + alpha * theta
            theta -= step * grad
        np.testing.assert_allclose(exact_layer_solve(H, V, alpha, s2), theta, atol=1e-6)

    def test_readout_solution_is_block_stationary(self, problem):
        params, data, prior = problem
        from pcmdl.model import forward

        H = data.inputs
        A = params.layers[1]
        theta = exact_layer_solve(H, data.targets, prior.alpha[0], prior.noise_var, A)
        g = codelength_gradient(params.with_layer(0, theta), data, prior)[0]
        assert np.linalg.norm(g) <= 1e-8

    def test_perturbations_never_improve(self, rng):
        H = rng.standard_normal((20, 3))
        V = rng.standard_normal((20, 2))
        A = rng.standard_normal((2, 2))
        for readout in (None, A):
            theta = exact_layer_solve(H, V, 0.5, 0.8, readout)
            base = block_objective(theta, H, V, 0.5, 0.8, readout)
            for _ in range(100):
                d = rng.standard_normal(theta.shape)
                d *= 1e-3 / np.linalg.norm(d)
                assert block_objective(theta + d, H, V, 0.5, 0.8, readout) >= base - 1e-12

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            exact_layer_solve([[1.0]], [[1.0]], 0.0, 1.0)


class TestInexactLayerSolve:
    def test_stationary_entry(self, problem):
        params, data, prior = problem
        exact = pc_sweep(params, data, prior, PcConfig())[0]
        theta1 = exact.layers[1]
        res = inexact_layer_solve(1, exact, data, prior, 1e-6, 50)
        assert res.iterations <= 1
        np.testing.assert_allclose(res.theta, theta1, atol=1e-10)

    def test_agrees_with_exact_solve(self, problem):
        params, data, prior = problem
        exact = pc_sweep(params, data, prior, PcConfig())[0]
        res = inexact_layer_solve(0, exact, data, prior, 1e-6, 5000)
        assert res.converged
        # re-solve block 0 exactly from the same point
        from pcmdl.pc import _exact_block

        np.testing.assert_allclose(res.theta, _exact_block(exact, 0, data, prior), atol=1e-4)

    def test_softplus_block_strictly_decreases(self):
        for seed in range(10):
            params, data, prior = make_problem(seed, activation="softplus", init_std=0.5)
            before = codelength(params, data, prior)
            res = inexact_layer_solve(0, params, data, prior, 1e-6, 20)
            g0 = np.linalg.norm(codelength_gradient(params, data, prior)[0])
            if g0 > 1e-6:
                assert res.objective < before
            assert res.objective == pytest.approx(codelength(params.with_layer(0, res.theta), data, prior))

    def test_convergence_flag_honest(self):
        params, data, prior = make_problem(2, activation="softplus", init_std=0.5)
        for cap in (1, 3, 400):
            res = inexact_layer_solve(0, params, data, prior, 1e-7, cap)
            if res.converged:
                assert res.grad_norm <= 1e-7
            grad = codelength_gradient(params.with_layer(0, res.theta), data, prior)[0]
            assert np.linalg.norm(grad) == pytest.approx(res.grad_norm, rel=1e-12)


class TestLipschitz:
    def test_scalar_layer(self):
        data = Dataset([[1.0]], [[0.0]])
        assert estimate_block_lipschitz(net([[0.3]]), data, GaussianPrior((1.0,))) == [pytest.approx(2.0)]

    def test_linear_constants_are_exact(self, problem):
        params, data, prior = problem
        L = estimate_block_lipschitz(params, data, prior)
        # Hessian of block l is the Kronecker operator divided by N
        from pcmdl.harness import codelength_hessian

        Hs = codelength_hessian(params, data, prior)
        n0 = params.layers[0].size
        assert L[0] == pytest.approx(np.linalg.eigvalsh(Hs[:n0, :n0]).max(), rel=1e-6)
        assert L[1] == pytest.approx(np.linalg.eigvalsh(Hs[n0:, n0:]).max(), rel=1e-6)

    def test_guaranteed_descent_step(self, problem):
        params, data, prior = problem
        L = estimate_block_lipschitz(params, data, prior)
        for l in range(params.n_layers):
            g = codelength_gradient(params, data, prior)[l]
            moved = params.with_layer(l, params.layers[l] - g / L[l])
            assert codelength(moved, data, prior) <= codelength(params, data, prior) - np.sum(g * g) / (2 * L[l]) + 1e-14

    def test_softplus_estimate_bounds_local_quotients(self):
        params, data, prior = make_problem(9, activation="softplus", init_std=0.5)
        L = estimate_block_lipschitz(params, data, prior)
        g = np.random.default_rng(0)
        t = params.layers[0]
        for _ in range(20):
            a = t + 0.01 * g.standard_normal(t.shape)
            ga = codelength_gradient(params.with_layer(0, a), data, prior)[0]
            g0 = codelength_gradient(params, data, prior)[0]
            assert np.linalg.norm(ga - g0) / np.linalg.norm(a - t) <= L[0]


class TestSweep:
    def test_fixed_point(self):
        params, data, prior = make_problem(0)
        star = pc_train(params, data, prior, PcConfig(sweeps=100000, stop_tolerance=1e-15)).final_params
        again, stats = pc_sweep(star, data, prior, PcConfig())
        np.testing.assert_allclose(again.flatten(), star.flatten(), atol=1e-8)
        assert abs(stats.descent) <= 1e-10

    def test_descent_meets_blockwise_bound(self):
        for seed in range(5):
            params, data, prior = make_problem(seed)
            for _ in range(5):
                params, stats = pc_sweep(params, data, prior, PcConfig())
                assert stats.descent >= stats.descent_bound - 1e-8

    def test_single_layer_equals_direct_solve(self, rng):
        X = rng.standard_normal((15, 3))
        Y = rng.standard_normal((15, 2))
        prior = GaussianPrior((3.0,), noise_var=0.5)
        out, stats = pc_sweep(net(np.zeros((2, 3))), Dataset(X, Y), prior, PcConfig())
        np.testing.assert_allclose(out.layers[0], exact_layer_solve(X, Y, 3.0, 0.5), atol=1e-14)
        assert stats.inner_iterations == [1]
        assert stats.flop_estimate > 0

    def test_exact_mode_needs_linear(self):
        params, data, prior = make_problem(0, activation="softplus")
        with pytest.raises(UnsupportedArchitecture):
            pc_sweep(params, data, prior, PcConfig())

    def test_inexact_softplus_descends(self):
        params, data, prior = make_problem(1, activation="softplus", init_std=0.5)
        cfg = PcConfig(mode=PcMode.INEXACT_GRADIENT, learning_rate=1.0, max_inner=100)
        for _ in range(5):
            params, stats = pc_sweep(params, data, prior, cfg)
            assert stats.codelength_after <= stats.codelength_before
            assert all(d >= 0 for d in stats.block_descent)


class TestTrain:
    def test_early_stop_length(self, problem):
        params, data, prior = problem
        traj = pc_train(params, data, prior, PcConfig(sweeps=1000, stop_tolerance=1e-6))
        k = len(traj.extras)
        assert k < 1000
        assert len(traj) == k + 1
        assert abs(traj.extras[-1].descent) < 1e-6

    def test_full_budget_without_tolerance(self, problem):
        traj = pc_train(*problem, PcConfig(sweeps=7))
        assert len(traj) == 8
        assert [r.cost for r in traj.records] == list(range(8))

    def test_monotone_over_seeds(self):
        for seed in range(100):
            traj = pc_train(*make_problem(seed), PcConfig(sweeps=30))
            assert np.all(np.diff(traj.totals) <= 1e-12)

    def test_deterministic(self, problem):
        a = pc_train(*problem, PcConfig(sweeps=5))
        b = pc_train(*problem, PcConfig(sweeps=5))
        assert a.to_dict() == b.to_dict()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PcConfig(sweeps=0)
        with pytest.raises(ValueError):
            PcConfig(inner_tolerance=0.0)


class TestClosedFormAgreement:
    """The engine's own operations replay the alternating closed-form updates."""

    def test_scalar_iterates(self):
        inst = ScalarInstance(1.3, -0.4, sigma2=0.7, alpha=1.9)
        ref = scalar_pc_iterate(inst, 0.0, 0.2, 8)
        w = 0.2
        for it in ref[1:]:
            p = net([[w]], [[1.0]])
            v = infer_exact_single_hidden(p, [[inst.x]], [[inst.y]]).values[1]
            w = exact_layer_solve([[inst.x]], v, inst.alpha, inst.sigma2)[0, 0]
            assert v[0, 0] == pytest.approx(it.v, abs=1e-14)
            assert w == pytest.approx(it.w, abs=1e-14)

    def test_vector_iterates(self):
        inst = VectorInstance(np.array([1.0, -2.0, 0.5]), np.array([0.3, 1.1]), sigma2=0.5, alpha=2.0)
        ref = vector_pc_iterate(inst, np.zeros(2), np.zeros((2, 3)), 6)
        W = np.zeros((2, 3))
        for it in ref[1:]:
            p = net(W, np.eye(2))
            v = infer_exact_single_hidden(p, inst.x[None, :], inst.y[None, :]).values[1]
            W = exact_layer_solve(inst.x[None, :], v, inst.alpha, inst.sigma2)
            np.testing.assert_allclose(v[0], it.v, atol=1e-14)
            np.testing.assert_allclose(W, it.w, atol=1e-14)
