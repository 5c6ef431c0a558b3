"""Reverse-mode gradients against the finite-difference oracle.

The full 100-configuration sweep lives in the acceptance suite; these are
the fast per-path checks used during development.
"""

import numpy as np

from gradcheck import (
    analytic_gradients,
    generic_point_params,
    max_relative_error,
    random_batch,
    random_small_config,
)
from scene_robust.nn.gin import GinConfig, init_params, loss_and_grad
from scene_robust.nn.optim import AdamW


class TestGradientOracle:
    def test_small_fixed_model(self):
        rng = np.random.default_rng(0)
        config = GinConfig(
            input_dim=3, hidden_dim=4, readout_dim=5, descriptor_dim=3,
            dropout_rate=0.5, learn_epsilon=True,
        )
        params, state = init_params(config, seed=1)
        batch = random_batch(rng, [3, 2], 4, 3)
        err = max_relative_error(batch, np.array([1, 3]), params, state, config, dropout_key=9)
        assert err < 1e-4, err

    def test_no_dropout_path(self):
        rng = np.random.default_rng(1)
        config = GinConfig(
            input_dim=2, hidden_dim=3, readout_dim=4, descriptor_dim=2, dropout_rate=0.0
        )
        params, state = init_params(config, seed=2)
        batch = random_batch(rng, [2], 3, 2)
        err = max_relative_error(batch, np.array([0]), params, state, config)
        assert err < 1e-4, err

    def test_ten_random_configs(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            config, batch, labels, key = random_small_config(rng)
            params = generic_point_params(config, rng)
            _, state = init_params(config, seed=0)
            err = max_relative_error(batch, labels, params, state, config, dropout_key=key)
            assert err < 1e-4, (config, err)

    def test_loss_and_grad_matches_backward(self):
        """The CE-only spec operation agrees with the shared backward pass."""
        rng = np.random.default_rng(3)
        config = GinConfig(input_dim=3, hidden_dim=4, readout_dim=5, descriptor_dim=3)
        params, state = init_params(config, seed=4)
        batch = random_batch(rng, [2, 2], 3, 3)
        labels = np.array([0, 2])
        loss, grads, _ = loss_and_grad(batch, labels, params, state, config, dropout_key=5)
        assert np.isfinite(loss)
        # descriptor head gets no gradient from the CE objective
        assert np.array_equal(grads["descriptor.w"], np.zeros_like(grads["descriptor.w"]))
        for name, grad in grads.items():
            assert grad.shape == params[name].shape


class TestAdamW:
    def test_decoupled_decay_shrinks_without_gradient(self):
        params = {"w": np.full(3, 2.0)}
        opt = AdamW(lr=0.1, weight_decay=0.5)
        opt.step(params, {"w": np.zeros(3)}, {"w"})
        assert np.allclose(params["w"], 2.0 - 0.1 * 0.5 * 2.0)

    def test_step_direction_against_gradient(self):
        params = {"w": np.zeros(3)}
        opt = AdamW(lr=0.01)
        opt.step(params, {"w": np.array([1.0, -1.0, 0.0])}, {"w"})
        assert params["w"][0] < 0 < params["w"][1]
        assert params["w"][2] == 0.0

    def test_non_trainable_names_untouched(self):
        params = {"w": np.ones(2), "frozen": np.ones(2)}
        opt = AdamW(lr=0.1)
        opt.step(params, {"w": np.ones(2), "frozen": np.ones(2)}, {"w"})
        assert np.array_equal(params["frozen"], np.ones(2))
        assert not np.array_equal(params["w"], np.ones(2))
