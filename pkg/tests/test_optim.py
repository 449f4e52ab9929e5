import numpy as np
import pytest

from miniaffect.optim import AdamW, AdamWConfig

from oracles import reference_adam_step


def test_defaults_match_training_setup():
    cfg = AdamWConfig()
    assert cfg.lr == 1e-5
    assert (cfg.beta1, cfg.beta2) == (0.9, 0.99)
    assert cfg.eps == 1e-6
    assert cfg.weight_decay == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        AdamWConfig(lr=0.0).validate()
    with pytest.raises(ValueError):
        AdamWConfig(beta1=1.0).validate()
    with pytest.raises(ValueError):
        AdamWConfig(eps=0.0).validate()
    with pytest.raises(ValueError):
        AdamWConfig(weight_decay=-0.1).validate()


def test_zero_gradient_fresh_state_is_noop():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    before = params["w"].copy()
    opt = AdamW(AdamWConfig(lr=0.1))
    opt.step(params, {"w": np.zeros(3)})
    assert np.array_equal(params["w"], before)


def test_first_step_scalar_hand_evaluated():
    # theta=0, g=1: m_hat = v_hat = 1 after bias correction, so
    # the update is exactly -lr / (1 + eps)
    lr, eps = 1e-3, 1e-6
    params = {"w": np.array([0.0])}
    opt = AdamW(AdamWConfig(lr=lr, eps=eps))
    opt.step(params, {"w": np.array([1.0])})
    assert abs(params["w"][0] - (-lr / (1.0 + eps))) < 1e-12


def test_matches_reference_adam_when_decay_zero():
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(5)
    params = {"w": theta.copy()}
    cfg = AdamWConfig(lr=1e-3, beta1=0.9, beta2=0.99, eps=1e-6, weight_decay=0.0)
    opt = AdamW(cfg)
    ref_theta = theta.astype(float).tolist()
    m = [0.0] * 5
    v = [0.0] * 5
    for t in range(1, 8):
        g = rng.standard_normal(5)
        opt.step(params, {"w": g.copy()})
        for i in range(5):
            ref_theta[i], m[i], v[i] = reference_adam_step(
                ref_theta[i], g[i], m[i], v[i], t, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps
            )
        assert np.abs(params["w"] - np.array(ref_theta)).max() < 1e-12


def test_decay_applied_to_pre_update_theta():
    lr, wd = 0.1, 0.5
    theta0 = 2.0
    params = {"w": np.array([theta0])}
    opt = AdamW(AdamWConfig(lr=lr, weight_decay=wd))
    opt.step(params, {"w": np.array([1.0])})
    adam_only = theta0 - lr * 1.0 / (1.0 + 1e-6)
    expected = adam_only - lr * wd * theta0
    assert abs(params["w"][0] - expected) < 1e-12


def test_non_finite_gradient_names_tensor():
    params = {"ok": np.zeros(2), "bad": np.zeros(2)}
    opt = AdamW(AdamWConfig(lr=1e-3))
    with pytest.raises(ValueError, match="bad"):
        opt.step(params, {"ok": np.zeros(2), "bad": np.array([1.0, np.nan])})
    with pytest.raises(ValueError, match="bad"):
        opt.step(params, {"ok": np.zeros(2), "bad": np.array([np.inf, 0.0])})


def test_step_deterministic():
    def run():
        params = {"w": np.full(3, 0.5)}
        opt = AdamW(AdamWConfig(lr=1e-2))
        for t in range(5):
            opt.step(params, {"w": np.array([0.1, -0.2, 0.3]) * (t + 1)})
        return params["w"]

    assert np.array_equal(run(), run())


def test_tensors_do_not_share_state():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    opt = AdamW(AdamWConfig(lr=1e-2))
    opt.step(params, {"a": np.ones(2), "b": np.zeros(2)})
    assert np.all(opt.m["b"] == 0.0)
    assert np.all(opt.v["b"] == 0.0)
    assert np.all(opt.m["a"] != 0.0)
    assert np.array_equal(params["b"], np.zeros(2))


def test_update_magnitude_bound():
    rng = np.random.default_rng(1)
    params = {"w": rng.standard_normal(10)}
    cfg = AdamWConfig(lr=1e-2, weight_decay=0.01)
    opt = AdamW(cfg)
    for _ in range(10):
        before = params["w"].copy()
        g = rng.standard_normal(10) * 10
        opt.step(params, {"w": g})
        m_hat = opt.m["w"] / (1 - cfg.beta1**opt.t)
        v_hat = opt.v["w"] / (1 - cfg.beta2**opt.t)
        bound = cfg.lr * np.abs(m_hat) / (np.sqrt(v_hat) + cfg.eps) + cfg.lr * cfg.weight_decay * np.abs(before)
        assert np.all(np.abs(params["w"] - before) <= bound + 1e-15)
