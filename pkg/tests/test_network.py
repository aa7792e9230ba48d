import numpy as np
import pytest

from bspinn.autodiff import Jet2, ParamTape
from bspinn.conditions import OptionSpec, OptionStyle
from bspinn.network import (NetworkConfig, default_config, forward, forward_values,
                            init_params, load_params, price, save_params, wrap_params)


@pytest.fixture
def spec():
    return OptionSpec(OptionStyle.EUROPEAN_CALL, strike=40.0, rate=0.05,
                      sigma=0.2, maturity=1.0)


@pytest.fixture
def cfg(spec):
    return default_config(spec, seed=5, dtype="float64")


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(shallow_layers=4, deep_layers=4)
    with pytest.raises(ValueError):
        NetworkConfig(width=0)
    with pytest.raises(ValueError):
        NetworkConfig(activation="relu")
    with pytest.raises(ValueError):
        NetworkConfig(input_scale=(0.0, 1.0))


def test_init_is_deterministic(cfg):
    a = init_params(cfg)
    b = init_params(cfg)
    for x, y in zip(a.flatten(), b.flatten()):
        assert np.array_equal(x, y)


def test_init_shapes(cfg):
    params = init_params(cfg)
    shapes = [w.shape for w in params.deep_w]
    assert shapes == [(2, 64), (64, 64), (64, 64), (64, 64), (64, 1)]
    assert [w.shape for w in params.shallow_w] == [(2, 64), (64, 1)]
    assert params.combine_w.shape == (2,)
    assert all(np.all(b == 0.0) for b in params.deep_b + params.shallow_b)


def test_init_respects_xavier_bounds(cfg):
    params = init_params(cfg)
    for w in params.deep_w + params.shallow_w:
        bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.max(np.abs(w)) <= bound
    assert np.max(np.abs(params.combine_w)) <= np.sqrt(2.0)


def test_zero_weights_give_constant_output(cfg):
    params = init_params(cfg)
    params = params.replace_arrays([np.zeros_like(a) for a in params.flatten()])
    params.combine_b = np.asarray(0.37 / cfg.output_scale)
    for S, t in ((3.0, 0.1), (120.0, 0.9)):
        jet = price(params, S, t)
        assert float(jet.value) == pytest.approx(0.37, rel=1e-6)
        assert float(jet.d_dS) == 0.0
        assert float(jet.d2_dS2) == 0.0
        assert float(jet.d_dt) == 0.0


def test_zero_deep_gate_leaves_shallow_branch(cfg):
    params = init_params(cfg)
    params.combine_w = np.array([1.0, 0.0])   # w_shallow=1, w_deep=0
    params.combine_b = np.zeros(())
    S, t = np.array([30.0, 70.0]), np.array([0.2, 0.8])
    full = forward_values(params, S, t)

    # shallow branch alone, computed by hand
    x = np.stack([S / cfg.input_scale[0], t / cfg.input_scale[1]], axis=1)
    h = np.tanh(x @ params.shallow_w[0] + params.shallow_b[0])
    expected = (h @ params.shallow_w[1] + params.shallow_b[1]).reshape(-1)
    np.testing.assert_allclose(full, expected * cfg.output_scale, rtol=1e-12)


def test_forward_requires_jets(cfg):
    params = init_params(cfg)
    with pytest.raises(TypeError):
        forward(params, 40.0, 0.5)


def test_forward_rejects_non_finite(cfg):
    params = init_params(cfg)
    with pytest.raises(ValueError):
        price(params, np.nan, 0.5)
    params.deep_w[0] = params.deep_w[0].copy()
    params.deep_w[0][0, 0] = np.inf
    with pytest.raises(ValueError):
        price(params, 40.0, 0.5)


def test_forward_derivatives_match_finite_differences(cfg):
    params = init_params(cfg)
    rng = np.random.default_rng(17)
    h = 1e-4 * cfg.input_scale[0]
    ht = 1e-4 * cfg.input_scale[1]
    S = rng.uniform(1.0, 159.0, 100)
    t = rng.uniform(0.05, 0.95, 100)
    jet = price(params, S, t)

    def v(S_, t_):
        return np.asarray(forward_values(params, S_, t_), dtype=float)

    d1 = (v(S + h, t) - v(S - h, t)) / (2 * h)
    d2 = (v(S + h, t) - 2 * v(S, t) + v(S - h, t)) / h**2
    dt = (v(S, t + ht) - v(S, t - ht)) / (2 * ht)
    np.testing.assert_allclose(np.asarray(jet.d_dS), d1, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(np.asarray(jet.d2_dS2), d2, rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(np.asarray(jet.d_dt), dt, rtol=1e-5, atol=1e-8)


def test_forward_is_pure(cfg):
    params = init_params(cfg)
    a = forward_values(params, np.array([50.0]), np.array([0.5]))
    b = forward_values(params, np.array([50.0]), np.array([0.5]))
    assert np.array_equal(a, b)


def test_residual_connections_do_not_change_shapes(spec):
    for flag in (True, False):
        cfg = default_config(spec, residual_connections=flag, dtype="float64")
        params = init_params(cfg)
        out = forward_values(params, np.ones(7) * 30.0, np.ones(7) * 0.3)
        assert np.shape(out) == (7,)


def test_taped_forward_matches_untaped(cfg):
    params = init_params(cfg)
    S, t = np.array([20.0, 45.0, 90.0]), np.array([0.1, 0.5, 0.9])
    plain = price(params, S, t)
    tape = ParamTape()
    taped = forward(wrap_params(params, tape), Jet2.seed_spot(S), Jet2.seed_time(t))
    for a, b in zip(plain.astuple(), taped.astuple()):
        np.testing.assert_allclose(np.asarray(a), np.asarray(b.value), rtol=1e-12)


def test_checkpoint_roundtrip_is_bit_exact(tmp_path, spec):
    cfg = default_config(spec, seed=9)   # float32 path
    params = init_params(cfg)
    extra = {"adam_step": np.asarray(17)}
    path = tmp_path / "ckpt.npz"
    save_params(path, params, extra=extra, meta={"note": "x"})
    loaded, extra2, meta = load_params(path)
    assert loaded.config == params.config
    assert meta == {"note": "x"}
    assert int(extra2["adam_step"]) == 17
    for a, b in zip(params.flatten(), loaded.flatten()):
        assert np.array_equal(a, b)
        assert a.dtype == b.dtype
