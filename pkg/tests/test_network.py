import numpy as np
import pytest

from sdoa.arrays import ArrayConfig, ImperfectionCaps, ImperfectionRealization, Snapshot, SourceSet, synthesize_snapshot
from sdoa.datasets import DoaSamplingPolicy, generate_dataset
from sdoa.network import (
    AdamState,
    NetConfig,
    SdoaNet,
    adam_step,
    estimate,
    forward,
    init_params,
    load_model,
    loss_and_grad,
    save_model,
    stack_received,
    to_complex,
    train,
)
from sdoa.spectrum import AngleGrid

CFG = NetConfig(n_antennas=16)
SMALL = NetConfig(n_antennas=4, n_filters=2, inner_dim=6, n_conv_layers=2, kernel_size=3, batch_size=4)


def small_batch(cfg, n_batch, seed=0):
    arr = ArrayConfig(n_antennas=cfg.n_antennas)
    policy = DoaSamplingPolicy(n_sources=2, min_separation_deg=20.0)
    return generate_dataset(arr, ImperfectionCaps(), 0, n_batch, (10, 20), policy, seed)


class TestInit:
    def test_deterministic(self):
        a = init_params(CFG, 3)
        b = init_params(CFG, 3)
        for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    def test_shapes_table(self):
        params = init_params(CFG, 0)
        assert params.fc_in_w.shape == (32, 64)
        assert params.fc_in_w.size == 2048
        assert params.fc_in_b.shape == (64,)
        assert len(params.blocks) == 6
        for blk in params.blocks:
            assert blk.kernel.shape == (2, 2, 3)
            assert blk.bias.shape == (2,)
        assert params.fc_out_w.shape == (64, 32)
        assert params.fc_out_b.shape == (32,)

    def test_batchnorm_state(self):
        params = init_params(CFG, 1)
        for blk in params.blocks:
            assert np.all(blk.running_var == 1.0)
            assert np.all(blk.running_mean == 0.0)
            assert np.all(blk.gamma == 1.0)
            assert np.all(blk.beta == 0.0)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            NetConfig(kernel_size=4)


class TestStacking:
    def test_to_complex_definition(self):
        assert np.array_equal(to_complex(np.array([1.0, 2.0, 3.0, 4.0])), [1 + 3j, 2 + 4j])

    def test_zeros(self):
        assert np.array_equal(to_complex(np.zeros(8)), np.zeros(4, dtype=complex))

    def test_round_trip_with_stacking(self):
        rng = np.random.default_rng(0)
        r = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        assert np.array_equal(to_complex(stack_received(r[None, :])[0]), r)

    def test_odd_length_rejected(self):
        with pytest.raises(ValueError):
            to_complex(np.zeros(5))


class TestForward:
    def test_output_shape(self):
        params = init_params(CFG, 0)
        y = np.zeros((64, 32))
        out, cache = forward(params, y, CFG, train=True)
        assert out.shape == (64, 32)
        assert len(cache.blocks) == 6

    def test_eval_mode_pure(self):
        params = init_params(CFG, 1)
        rng = np.random.default_rng(2)
        y = rng.standard_normal((3, 32))
        out1, c1 = forward(params, y, CFG, train=False)
        out2, c2 = forward(params, y, CFG, train=False)
        assert np.array_equal(out1, out2)
        assert c1 is None and c2 is None

    def test_zero_input_matches_scalar_trace(self):
        # independent layer-by-layer recomputation with plain loops
        cfg = SMALL
        params = init_params(cfg, 5)
        rng = np.random.default_rng(3)
        for blk in params.blocks:  # non-trivial eval statistics
            blk.running_mean[:] = rng.uniform(-0.2, 0.2, cfg.n_filters)
            blk.running_var[:] = rng.uniform(0.5, 1.5, cfg.n_filters)
            blk.bias[:] = rng.uniform(-0.5, 0.5, cfg.n_filters)
            blk.gamma[:] = rng.uniform(0.5, 1.5, cfg.n_filters)
            blk.beta[:] = rng.uniform(-0.5, 0.5, cfg.n_filters)
        out, _ = forward(params, np.zeros((1, cfg.input_dim)), cfg, train=False)

        x = [[params.fc_in_b[f * cfg.inner_dim + i] for i in range(cfg.inner_dim)] for f in range(cfg.n_filters)]
        pad = (cfg.kernel_size - 1) // 2
        for blk in params.blocks:
            conv = [[0.0] * cfg.inner_dim for _ in range(cfg.n_filters)]
            for o in range(cfg.n_filters):
                for i in range(cfg.inner_dim):
                    acc = blk.bias[o]
                    for c in range(cfg.n_filters):
                        for t in range(cfg.kernel_size):
                            j = i + t - pad
                            if 0 <= j < cfg.inner_dim:
                                acc += blk.kernel[o, c, t] * x[c][j]
                    conv[o][i] = acc
            x = [
                [
                    max(
                        0.0,
                        blk.gamma[o]
                        * (conv[o][i] - blk.running_mean[o])
                        / np.sqrt(blk.running_var[o] + cfg.bn_epsilon)
                        + blk.beta[o],
                    )
                    for i in range(cfg.inner_dim)
                ]
                for o in range(cfg.n_filters)
            ]
        flat = np.array([x[f][i] for f in range(cfg.n_filters) for i in range(cfg.inner_dim)])
        expected = flat @ params.fc_out_w + params.fc_out_b
        assert np.max(np.abs(out[0] - expected)) < 1e-12

    def test_constant_batch_collapses_to_shifted_relu(self):
        # zero input keeps the first conv output constant per channel (bias
        # only), so batch variance is 0, x-hat is 0 and the block emits
        # ReLU(beta) everywhere
        cfg = SMALL
        params = init_params(cfg, 7)
        params.blocks[0].bias[:] = [0.7, -0.4]
        params.blocks[0].beta[:] = [0.3, -0.2]
        y = np.zeros((4, cfg.input_dim))
        _, cache = forward(params, y, cfg, train=True)
        first = cache.blocks[1].x_in  # input of block 1 = output of block 0
        assert np.allclose(first[:, 0, :], 0.3)
        assert np.allclose(first[:, 1, :], 0.0)

    def test_train_mode_batch_statistics(self):
        cfg = SMALL
        params = init_params(cfg, 9)
        rng = np.random.default_rng(4)
        y = 100.0 * rng.standard_normal((32, cfg.input_dim))  # large scale: eps negligible
        _, cache = forward(params, y, cfg, train=True)
        xhat = cache.blocks[0].xhat
        mean = xhat.mean(axis=(0, 2))
        var = xhat.var(axis=(0, 2))
        assert np.max(np.abs(mean)) < 1e-10
        assert np.max(np.abs(var - 1.0)) < 1e-8

    def test_running_stats_move_in_train_mode(self):
        cfg = SMALL
        params = init_params(cfg, 11)
        rng = np.random.default_rng(5)
        before = params.blocks[0].running_mean.copy()
        forward(params, rng.standard_normal((8, cfg.input_dim)), cfg, train=True)
        assert not np.array_equal(params.blocks[0].running_mean, before)

    def test_bad_input_shape(self):
        params = init_params(SMALL, 0)
        with pytest.raises(ValueError):
            forward(params, np.zeros((2, 5)), SMALL)


class TestLossAndGrad:
    def test_zero_loss_at_exact_match(self):
        cfg = SMALL
        params = init_params(cfg, 13)
        grid = AngleGrid.linspace(91)
        batch = small_batch(cfg, 4, seed=1)
        # make the reference equal to the network's own induced spectrum
        from sdoa.network import _loss_and_grad_arrays, _spectrum_loss_grad
        from sdoa.spectrum import steering_matrix

        y = stack_received(np.array([s.received for s in batch]))
        steering = steering_matrix(grid.angles, np.arange(cfg.n_antennas) * 0.5)
        out, _ = forward(params, y, cfg, train=True)
        refs = np.abs(to_complex(out) @ steering.T) ** 2
        loss, grads = _loss_and_grad_arrays(params, y, refs, steering, cfg)
        assert loss == pytest.approx(0.0, abs=1e-24)
        for g in grads.values():
            assert np.allclose(g, 0.0, atol=1e-12)

    def test_duplicated_batch_keeps_loss(self):
        cfg = SMALL
        params = init_params(cfg, 17)
        grid = AngleGrid.linspace(91)
        batch = small_batch(cfg, 3, seed=2)
        loss1, _ = loss_and_grad(params.copy(), batch, grid, cfg)
        loss2, _ = loss_and_grad(params.copy(), batch + batch, grid, cfg)
        assert loss1 == pytest.approx(loss2, rel=1e-12)

    def test_gradients_match_finite_differences(self):
        cfg = SMALL
        params = init_params(cfg, 19)
        grid = AngleGrid.linspace(61)
        batch = small_batch(cfg, 4, seed=3)
        _, grads = loss_and_grad(params, batch, grid, cfg)

        rng = np.random.default_rng(23)
        step = 1e-5
        for name, arr in params.trainable():
            flat = arr.ravel()
            idx = rng.choice(flat.size, size=min(5, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                lp, _ = loss_and_grad(params, batch, grid, cfg)
                flat[i] = orig - step
                lm, _ = loss_and_grad(params, batch, grid, cfg)
                flat[i] = orig
                numeric = (lp - lm) / (2 * step)
                analytic = grads[name].ravel()[i]
                if max(abs(numeric), abs(analytic)) < 1e-7:
                    continue  # both zero at finite-difference resolution
                rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic))
                assert rel < 1e-4, f"{name}[{i}]: {analytic} vs {numeric}"

    def test_non_finite_loss_raises(self):
        cfg = SMALL
        params = init_params(cfg, 29)
        params.fc_out_w[:] = 1e300
        grid = AngleGrid.linspace(61)
        batch = small_batch(cfg, 2, seed=5)
        with pytest.raises(ArithmeticError):
            loss_and_grad(params, batch, grid, cfg)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = init_params(SMALL, 31)
        reference = params.copy()
        state = AdamState.for_params(params)
        grads = {name: np.zeros_like(arr) for name, arr in params.trainable()}
        adam_step(params, grads, state, lr=0.1)
        for (_, a), (_, b) in zip(params.trainable(), reference.trainable()):
            assert np.array_equal(a, b)

    def test_first_step_magnitude(self):
        params = init_params(SMALL, 37)
        before = params.copy()
        state = AdamState.for_params(params)
        rng = np.random.default_rng(6)
        grads = {name: rng.standard_normal(arr.shape) for name, arr in params.trainable()}
        adam_step(params, grads, state, lr=1e-3)
        for name, arr in params.trainable():
            prev = dict(before.trainable())[name]
            g = grads[name]
            big = np.abs(g) > 1e-4  # |g| >> adam eps
            delta = arr - prev
            assert np.allclose(delta[big], -1e-3 * np.sign(g[big]), atol=1e-5)
        assert state.step == 1

    def test_deterministic(self):
        params1 = init_params(SMALL, 41)
        params2 = params1.copy()
        s1 = AdamState.for_params(params1)
        s2 = AdamState.for_params(params2)
        rng = np.random.default_rng(7)
        grads = {name: rng.standard_normal(arr.shape) for name, arr in params1.trainable()}
        adam_step(params1, grads, s1, 1e-3)
        adam_step(params2, grads, s2, 1e-3)
        for (_, a), (_, b) in zip(params1.arrays(), params2.arrays()):
            assert np.array_equal(a, b)


class TestTrain:
    def test_seven_epochs_cover_the_curriculum(self):
        cfg = SMALL
        _, history = train(cfg, ImperfectionCaps(), epochs=7, samples_per_epoch=8,
                           policy=DoaSamplingPolicy(2, -60, 60, 20.0), rng_seed=0)
        labels = [h.stage_label for h in history]
        assert labels == [
            "perfect",
            "position_perturbation",
            "inconsistent_gains",
            "inconsistent_phases",
            "mutual_coupling",
            "nonlinear",
            "all_effects",
        ]

    def test_zero_learning_rate_freezes_params(self):
        cfg = NetConfig(n_antennas=4, n_filters=2, inner_dim=6, n_conv_layers=2,
                        kernel_size=3, batch_size=4, learning_rate=0.0)
        params, _ = train(cfg, ImperfectionCaps(), epochs=1, samples_per_epoch=8,
                          policy=DoaSamplingPolicy(2, -60, 60, 20.0), rng_seed=3)
        fresh = init_params(cfg, (3, 0))
        for (name, a), (_, b) in zip(params.trainable(), fresh.trainable()):
            assert np.array_equal(a, b), name

    def test_zero_lr_fixed_dataset_constant_loss(self):
        # frozen parameters on a fixed dataset: every epoch repeats the loss
        cfg = NetConfig(n_antennas=4, n_filters=2, inner_dim=6, n_conv_layers=2,
                        kernel_size=3, batch_size=4, learning_rate=0.0)
        data = small_batch(cfg, 8, seed=4)
        _, history = train(cfg, ImperfectionCaps(), epochs=3, dataset=data, rng_seed=1)
        losses = [h.mean_loss for h in history]
        assert losses[0] == losses[1] == losses[2]
        assert all(h.stage_label == "dataset" for h in history)

    def test_deterministic_runs(self):
        cfg = SMALL
        p1, h1 = train(cfg, ImperfectionCaps(), epochs=2, samples_per_epoch=12,
                       policy=DoaSamplingPolicy(2, -60, 60, 20.0), rng_seed=5)
        p2, h2 = train(cfg, ImperfectionCaps(), epochs=2, samples_per_epoch=12,
                       policy=DoaSamplingPolicy(2, -60, 60, 20.0), rng_seed=5)
        for (_, a), (_, b) in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)
        assert [h.mean_loss for h in h1] == [h.mean_loss for h in h2]


class TestEstimate:
    def test_untrained_params_give_valid_output(self):
        params = init_params(CFG, 43)
        grid = AngleGrid.linspace(361)
        rng = np.random.default_rng(8)
        r = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        spec, est = estimate(params, r, grid, 3, CFG)
        assert spec.values.shape == (361,)
        assert np.all(spec.values >= 0)
        assert est.doas.size == 3

    def test_eval_mode_repeatable(self):
        params = init_params(CFG, 47)
        grid = AngleGrid.linspace(361)
        rng = np.random.default_rng(9)
        r = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        s1, e1 = estimate(params, r, grid, 2, CFG)
        s2, e2 = estimate(params, r, grid, 2, CFG)
        assert np.array_equal(s1.values, s2.values)
        assert np.array_equal(e1.doas, e2.doas)


class TestModelFile:
    def test_round_trip(self, tmp_path):
        params = init_params(CFG, 53)
        rng = np.random.default_rng(10)
        for blk in params.blocks:
            blk.running_mean[:] = rng.standard_normal(2)
            blk.running_var[:] = rng.uniform(0.5, 2.0, 2)
        path = save_model(tmp_path / "m.sdon", params, CFG)
        loaded, cfg = load_model(path)
        assert cfg == CFG
        for (na, a), (nb, b) in zip(params.arrays(), loaded.arrays()):
            assert na == nb
            assert np.array_equal(a, b)

    def test_rejects_bad_magic(self, tmp_path):
        bad = tmp_path / "bad.sdon"
        bad.write_bytes(b"XXXX" + bytes(60))
        with pytest.raises(ValueError):
            load_model(bad)

    def test_rejects_truncated_body(self, tmp_path):
        params = init_params(SMALL, 59)
        path = save_model(tmp_path / "t.sdon", params, SMALL)
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ValueError):
            load_model(path)


class TestSdoaNetEstimator:
    def test_fit_predict_shapes(self):
        est = SdoaNet(
            n_antennas=4, n_sources=2, inner_dim=6, n_conv_layers=2, batch_size=4,
            epochs=2, samples_per_epoch=8, train_grid_size=61, grid_size=181,
            random_state=1,
        )
        est.fit()
        arr = ArrayConfig(n_antennas=4)
        snap = synthesize_snapshot(
            arr, ImperfectionRealization.identity(4),
            SourceSet(np.array([-20.0, 25.0]), np.ones(2, dtype=complex)), 20.0, 1,
        )
        doas = est.predict(snap.received[None, :])
        assert doas.shape == (1, 2)
        assert len(est.history_) == 2

    def test_save_load_round_trip(self, tmp_path):
        est = SdoaNet(n_antennas=4, n_sources=2, inner_dim=6, n_conv_layers=2, batch_size=4,
                      epochs=1, samples_per_epoch=8, train_grid_size=61, grid_size=181)
        est.fit()
        est.save(tmp_path / "net.sdon")
        other = SdoaNet.from_file(tmp_path / "net.sdon", n_sources=2, grid_size=181)
        rng = np.random.default_rng(11)
        r = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        assert np.array_equal(est.predict(r[None, :]), other.predict(r[None, :]))

    def test_predict_before_fit_raises(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            SdoaNet(n_antennas=4).predict(np.zeros((1, 4), dtype=complex))
