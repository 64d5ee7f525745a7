import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esn_ensemble.core import TimeSeries, mse
from esn_ensemble.datasets import mackey_glass
from esn_ensemble.distributions import RngStream, WeightSpec
from esn_ensemble.errors import (
    CannotScaleError,
    DivergedPredictionError,
    FormatError,
    UntrainedModelError,
    UsageError,
)
from esn_ensemble.reservoir import (
    DynamicLeak,
    EsnConfig,
    EsnModel,
    FixedLeak,
    Generative,
    Guided,
    Harvest,
    InitState,
    StateNoise,
    fit_readout,
    harvest_states,
    init_esn,
    init_state,
    load_model,
    parse_init_state,
    parse_leak,
    parse_state_noise,
    predict,
    predict_generative,
    predict_guided,
    save_model,
    train_readout,
    training_mse,
    update_state,
)


def eig_radius(w):
    return float(np.abs(np.linalg.eigvals(w)).max())


def hand_model(w_in, w, alpha=0.3):
    w_in, w = np.atleast_2d(w_in).astype(float), np.atleast_2d(w).astype(float)
    cfg = EsnConfig(n_res=w.shape[0], leak=FixedLeak(alpha), washout_len=0)
    return EsnModel(cfg, w_in, w)


def noisy_series(n, seed=0):
    r = np.random.default_rng(seed)
    return TimeSeries(np.sin(0.3 * np.arange(n)) + 0.1 * r.standard_normal(n))


# initialization


def test_init_dense_has_no_zeros_and_is_deterministic():
    cfg = EsnConfig(n_res=100, master_seed=3)
    a, b = init_esn(cfg), init_esn(cfg)
    assert np.count_nonzero(a.w == 0) == 0
    assert np.array_equal(a.w, b.w) and np.array_equal(a.w_in, b.w_in)
    assert a.w_back is None and not a.trained
    assert a.w_in.shape == (100, 2)


def test_init_seeds_differ():
    a = init_esn(EsnConfig(n_res=30, master_seed=1))
    b = init_esn(EsnConfig(n_res=30, master_seed=2))
    assert not np.array_equal(a.w, b.w)


def test_init_radius_matches_rho():
    model = init_esn(EsnConfig(n_res=300, rho=1.25, master_seed=5))
    assert abs(eig_radius(model.w) - 1.25) <= 1.25e-6


@pytest.mark.parametrize("density", [0.05, 0.3, 0.8])
def test_sparsity_mask(density):
    model = init_esn(EsnConfig(n_res=200, density=density, master_seed=1))
    assert np.mean(model.w == 0) >= 1 - density - 0.02
    assert abs(np.mean(model.w != 0) - density) < 0.02


def test_density_too_low_raises_with_hint():
    with pytest.raises(CannotScaleError, match="raise density"):
        init_esn(EsnConfig(n_res=3, density=1e-9))


def test_input_scaling_and_feedback():
    base = init_esn(EsnConfig(n_res=20, master_seed=4))
    scaled = init_esn(EsnConfig(n_res=20, master_seed=4, input_scaling=2.5, feedback_enabled=True))
    np.testing.assert_allclose(scaled.w_in, 2.5 * base.w_in, rtol=1e-15)
    assert scaled.w_back.shape == (20, 1)
    assert np.all(np.abs(scaled.w_back) <= 0.5)


@pytest.mark.parametrize(
    "bad",
    [dict(density=0.0), dict(density=1.5), dict(rho=0.0), dict(beta=-1.0), dict(n_res=0), dict(input_scaling=0.0)],
)
def test_config_rejects(bad):
    with pytest.raises(UsageError):
        EsnConfig(**bad)


def test_leak_bounds():
    with pytest.raises(UsageError):
        FixedLeak(0.0)
    with pytest.raises(UsageError):
        FixedLeak(1.01)
    with pytest.raises(UsageError):
        DynamicLeak(0.5, 0.2)
    FixedLeak(1.0)


# state update


def test_zero_weights_decay():
    model = hand_model(np.zeros((4, 2)), np.zeros((4, 4)), alpha=0.3)
    x = np.array([0.5, -0.2, 0.9, 0.0])
    np.testing.assert_array_equal(update_state(model, x, 1.7), 0.7 * x)


def test_scalar_hand_example():
    # W_in [1; u] + W x_prev = 0.5 with x_prev = 0
    model = hand_model([[0.2, 0.3]], [[0.9]], alpha=0.5)
    x = update_state(model, np.zeros(1), 1.0)
    assert x[0] == pytest.approx(0.5 * math.tanh(0.5), rel=1e-15)
    assert x[0] == pytest.approx(0.23106, abs=5e-6)


def test_alpha_one_equals_unleaked_update(rng):
    model = replace(init_esn(EsnConfig(n_res=40, master_seed=9)), config=EsnConfig(n_res=40, leak=FixedLeak(1.0)))
    x = rng.uniform(-1, 1, 40)
    u = 0.37
    expected = np.tanh(model.w_in[:, 0] + model.w_in[:, 1] * u + model.w @ x)
    np.testing.assert_array_equal(update_state(model, x, u), expected)


def test_update_includes_noise_and_feedback():
    model = hand_model([[0.0, 0.0]], [[0.0]], alpha=1.0)
    assert update_state(model, np.zeros(1), 0.0, tau=np.array([0.25]))[0] == math.tanh(0.25)
    fb = replace(model, w_back=np.array([[2.0]]))
    assert update_state(fb, np.zeros(1), 0.0, y_prev=0.1)[0] == pytest.approx(math.tanh(0.2))


def test_dynamic_leak_needs_alpha():
    cfg = EsnConfig(n_res=3, leak=DynamicLeak(0.2, 0.4))
    model = init_esn(cfg)
    with pytest.raises(UsageError):
        update_state(model, np.zeros(3), 0.1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.floats(0.01, 1.0), st.floats(-5, 5))
def test_states_bounded(seed, alpha, u):
    model = init_esn(EsnConfig(n_res=20, rho=2.0, leak=FixedLeak(alpha), master_seed=seed))
    x = np.zeros(20)
    for _ in range(30):
        x = update_state(model, x, u)
        assert np.all(np.abs(x) < 1)


def test_states_saturate_at_most_one():
    # tanh rounds to exactly 1.0 beyond ~19, so only the closed bound survives
    model = init_esn(EsnConfig(n_res=20, rho=2.0, leak=FixedLeak(1.0), master_seed=1))
    x = np.zeros(20)
    for _ in range(30):
        x = update_state(model, x, 1e4)
        assert np.all(np.abs(x) <= 1)


def test_contraction_at_rho_below_one():
    cfg = EsnConfig(n_res=100, rho=0.9, leak=FixedLeak(0.3), master_seed=0)
    model = init_esn(cfg)
    r = np.random.default_rng(1)
    xa, xb = r.uniform(-1, 1, 100), r.uniform(-1, 1, 100)
    dists = []
    for _ in range(1000):
        xa, xb = update_state(model, xa, 0.0), update_state(model, xb, 0.0)
        dists.append(np.linalg.norm(xa - xb))
    dists = np.array(dists)
    assert dists[-1] < 1e-6
    # once the gap hits the ~1e-15 rounding floor it jitters by an ulp
    live = dists[dists > 1e-13]
    assert np.all(np.diff(live) < 0)


# harvest and training


def scalar_oracle_first_column(model, values, washout):
    """Pure-Python step-through of the N = 3 update up to the first kept column."""
    w_in = model.w_in.tolist()
    w = model.w.tolist()
    alpha = model.config.leak.alpha
    x = [0.0, 0.0, 0.0]
    for n in range(washout + 1):
        u = float(values[n])
        new = []
        for i in range(3):
            pre = w_in[i][0] + w_in[i][1] * u + sum(w[i][j] * x[j] for j in range(3))
            new.append((1 - alpha) * x[i] + alpha * math.tanh(pre))
        x = new
    return [1.0, float(values[washout])] + x


def test_harvest_first_column_matches_scalar_oracle():
    cfg = EsnConfig(n_res=3, washout_len=7, rho=0.8, master_seed=12)
    model = init_esn(cfg)
    values = noisy_series(40).values
    h = harvest_states(model, values)
    np.testing.assert_allclose(h.states[:, 0], scalar_oracle_first_column(model, values, 7), rtol=0, atol=1e-15)
    assert h.targets[0, 0] == values[8]


def test_harvest_counts_and_determinism():
    cfg = EsnConfig(n_res=10, washout_len=15, master_seed=1)
    model = init_esn(cfg)
    series = noisy_series(15 + 101)
    a, b = harvest_states(model, series), harvest_states(model, series)
    assert a.states.shape == (12, 100) and a.targets.shape == (1, 100)
    assert np.array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.targets[0], series.values[16:])
    assert np.all(np.abs(a.states[2:]) < 1)


def test_harvest_too_short():
    model = init_esn(EsnConfig(n_res=5, washout_len=10))
    with pytest.raises(UsageError):
        harvest_states(model, np.zeros(11))


def test_noise_and_dynamic_leak_are_seeded():
    cfg = EsnConfig(n_res=10, washout_len=5, master_seed=2, leak=DynamicLeak(0.1, 0.9), state_noise=StateNoise("uniform", 1e-2))
    model = init_esn(cfg)
    series = noisy_series(60)
    a, b = harvest_states(model, series), harvest_states(model, series)
    assert np.array_equal(a.states, b.states)
    quiet = init_esn(replace(cfg, state_noise=None))
    assert not np.array_equal(harvest_states(quiet, series).states, a.states)


def test_linear_teacher_exact_recovery():
    model = init_esn(EsnConfig(n_res=6, washout_len=10, beta=0.0, master_seed=3))
    h = harvest_states(model, noisy_series(200))
    g = np.random.default_rng(0).standard_normal((1, 8))
    trained = fit_readout(model, Harvest(h.states, g @ h.states, h.last_state, h.last_input))
    np.testing.assert_allclose(trained.w_out, g, atol=1e-8)


def test_ridge_shrinkage_monotone():
    model = init_esn(EsnConfig(n_res=20, washout_len=10, master_seed=3))
    h = harvest_states(model, noisy_series(300))
    norms = [np.linalg.norm(fit_readout(replace(model, config=replace(model.config, beta=b)), h).w_out) for b in (1e-6, 1e-2, 1.0, 1e2, 1e6)]
    assert all(x > y for x, y in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3


def test_readout_optimality_against_perturbations():
    model = init_esn(EsnConfig(n_res=10, washout_len=10, beta=0.0, master_seed=8))
    h = harvest_states(model, noisy_series(200))
    trained = fit_readout(model, h)
    best = training_mse(trained, h)
    r = np.random.default_rng(2)
    for _ in range(100):
        probe = replace(trained, w_out=trained.w_out + 1e-3 * r.standard_normal(trained.w_out.shape))
        assert training_mse(probe, h) >= best


def test_train_sets_last_state():
    model = init_esn(EsnConfig(n_res=10, washout_len=5, master_seed=1))
    series = noisy_series(50)
    trained = train_readout(model, series)
    h = harvest_states(model, series)
    assert np.array_equal(trained.last_state, h.states[2:, -1])
    assert trained.last_input[0] == series.values[-1]


def test_mg_training_mse_small(mg_series):
    cfg = EsnConfig(master_seed=0)
    model = init_esn(cfg)
    series = TimeSeries(mg_series.values[:2100])
    h = harvest_states(model, series)
    # near interpolation: seeds 0..4 land at 1.1e-8 .. 1.9e-8
    assert training_mse(fit_readout(model, h), h) < 1e-7


# prediction


def test_zero_readout_predicts_zero():
    model = init_esn(EsnConfig(n_res=10, washout_len=5, master_seed=1))
    trained = train_readout(model, noisy_series(50))
    zero = replace(trained, w_out=np.zeros_like(trained.w_out))
    assert np.all(predict_generative(zero, 20).values == 0.0)


def test_constant_fixed_point():
    c = 0.42
    model = init_esn(EsnConfig(n_res=10, washout_len=50, master_seed=1, rho=0.8))
    trained = train_readout(model, TimeSeries(np.full(300, c)))
    w_out = np.zeros_like(trained.w_out)
    w_out[0, 0] = c
    out = predict_generative(replace(trained, w_out=w_out), 100).values
    assert np.max(np.abs(out - c)) < 1e-9


def test_divergence_reported_with_step():
    model = init_esn(EsnConfig(n_res=10, washout_len=5, master_seed=1))
    trained = train_readout(model, noisy_series(50))
    w_out = np.zeros_like(trained.w_out)
    w_out[0, 1] = 10.0  # each step multiplies the fed-back input by 10
    with pytest.raises(DivergedPredictionError) as info:
        predict_generative(replace(trained, w_out=w_out, last_input=np.array([1.0])), 50)
    assert info.value.step == 6


def test_untrained_and_bad_steps():
    model = init_esn(EsnConfig(n_res=5, washout_len=2))
    with pytest.raises(UntrainedModelError):
        predict_generative(model, 5)
    with pytest.raises(UntrainedModelError):
        predict_guided(model, [1.0])
    trained = train_readout(model, noisy_series(20))
    with pytest.raises(UsageError):
        predict_generative(trained, 0)


def test_guided_length_and_determinism():
    model = train_readout(init_esn(EsnConfig(n_res=20, washout_len=10, master_seed=1)), noisy_series(200))
    inputs = noisy_series(37, seed=5)
    a, b = predict_guided(model, inputs), predict(model, Guided(inputs))
    assert len(a) == 37 and np.array_equal(a.values, b.values)
    assert np.array_equal(predict_generative(model, 9).values, predict(model, Generative(9)).values)


def test_guided_first_step_equals_generative_first_step():
    series = noisy_series(200)
    model = train_readout(init_esn(EsnConfig(n_res=20, washout_len=10, master_seed=1)), series)
    g = predict_generative(model, 1).values[0]
    assert predict_guided(model, [series.values[-1]]).values[0] == g


def test_guided_beats_generative_on_mg(mg_series):
    values = mg_series.values
    train, test = values[:1100], values[1100:1400]
    gen_mse, guided_mse = [], []
    for seed in range(10):
        model = train_readout(init_esn(EsnConfig(n_res=150, washout_len=100, master_seed=seed)), train)
        inputs = np.concatenate([[train[-1]], test[:-1]])
        try:
            gen_mse.append(mse(predict_generative(model, 300), test))
        except DivergedPredictionError:
            gen_mse.append(math.inf)
        guided_mse.append(mse(predict_guided(model, inputs), test))
    assert np.median(guided_mse) <= np.median(gen_mse)


def test_init_state_laws():
    assert np.array_equal(init_state(EsnConfig(n_res=5)), np.zeros(5))
    g = init_state(EsnConfig(n_res=10_000, init_state=InitState("gaussian", sigma=0.1)), RngStream(1, 5))
    assert abs(g.std() - 0.1) < 0.005
    u = init_state(EsnConfig(n_res=10_000, init_state=InitState("uniform", lo=0.0, hi=1.0)), RngStream(1, 5))
    assert u.min() >= 0 and u.max() <= 1 and abs(u.mean() - 0.5) < 0.02


# text forms and persistence


@pytest.mark.parametrize(
    "text, value",
    [("0.3", FixedLeak(0.3)), ("fixed(1)", FixedLeak(1.0)), ("dynamic(0.2,0.5)", DynamicLeak(0.2, 0.5))],
)
def test_parse_leak(text, value):
    assert parse_leak(text) == value


def test_parse_noise_and_init():
    assert parse_state_noise("none") is None
    assert parse_state_noise("uniform(0.01)") == StateNoise("uniform", 0.01)
    assert parse_init_state("gaussian(0.1)") == InitState("gaussian", sigma=0.1)
    assert parse_init_state("uniform(0,1)") == InitState("uniform", lo=0.0, hi=1.0)
    with pytest.raises(UsageError):
        parse_init_state("gaussian(1,2)")
    with pytest.raises(UsageError):
        parse_state_noise("laplace(1)")


def test_config_items_round_trip():
    cfg = EsnConfig(
        n_res=17,
        w_in_spec=WeightSpec.arcsine(),
        w_spec=WeightSpec.gaussian_same_range(),
        density=0.4,
        leak=DynamicLeak(0.1, 0.7),
        state_noise=StateNoise("gaussian", 1e-3),
        init_state=InitState("uniform", lo=-0.2, hi=0.3),
        feedback_enabled=True,
        beta=1e-5,
        washout_len=3,
        master_seed=2**63 + 5,
    )
    assert EsnConfig.from_items(cfg.to_items()) == cfg


def test_config_items_errors():
    with pytest.raises(FormatError) as info:
        EsnConfig.from_items({"rho": "abc"})
    assert info.value.key == "rho"
    with pytest.raises(FormatError):
        EsnConfig.from_items({"bogus": "1"})


def test_save_load_bit_identical(tmp_path):
    cfg = EsnConfig(n_res=12, washout_len=5, master_seed=3, feedback_enabled=True, leak=DynamicLeak(0.2, 0.6))
    model = train_readout(init_esn(cfg), noisy_series(80))
    path = tmp_path / "m.model"
    save_model(model, path)
    back = load_model(path)
    assert back.config == model.config
    for name in ("w_in", "w", "w_back", "w_out", "last_state", "last_input"):
        assert np.array_equal(getattr(back, name), getattr(model, name)), name
    assert np.array_equal(predict_generative(back, 30).values, predict_generative(model, 30).values)


def test_save_untrained_loads_untrained(tmp_path):
    model = init_esn(EsnConfig(n_res=4, washout_len=1))
    save_model(model, tmp_path / "u.model")
    back = load_model(tmp_path / "u.model")
    assert not back.trained
    with pytest.raises(UntrainedModelError):
        predict_generative(back, 3)


def test_load_rejects_corrupt(tmp_path):
    model = train_readout(init_esn(EsnConfig(n_res=4, washout_len=1)), noisy_series(20))
    path = tmp_path / "m.model"
    save_model(model, path)
    lines = path.read_text().splitlines()
    i = lines.index("[w]") + 1
    bad = lines[:i] + [lines[i] + " 1.0"] + lines[i + 1 :]
    path.write_text("\n".join(bad))
    with pytest.raises(FormatError) as info:
        load_model(path)
    assert info.value.line == i + 1
    path.write_text("junk\n")
    with pytest.raises(FormatError):
        load_model(path)
    with pytest.raises(FormatError):
        load_model(tmp_path / "missing.model")
