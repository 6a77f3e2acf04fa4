import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bezgym.dynamics import build_canonical_model, make_world
from bezgym.errors import LengthMismatch, ParseError, ValidationError
from bezgym.network import forward, input_gradient_penalty
from bezgym.rl.amp import (
    AmpConfig, MotionClip, amp_features, discriminator_init, discriminator_loss_and_grads,
    discriminator_step, feature_size, parse_motion_clip, procedural_jump_clip, style_reward,
)
from bezgym.rl.gae import compute_gae
from bezgym.rl.optim import Adam
from bezgym.rl.ppo import PpoConfig, PpoTrainer, normalize_advantages, ppo_surrogate
from bezgym.rl.toy import PointMassEnv, optimal_return


def brute_force_gae(r, v, d, boot, gamma, lam):
    """Sum the discounted TD errors explicitly, stopping at episode ends."""
    T = len(r)
    nxt = np.append(v[1:], boot)
    delta = [r[t] + gamma * nxt[t] * (1 - d[t]) - v[t] for t in range(T)]
    adv = np.zeros(T)
    for t in range(T):
        total, w = 0.0, 1.0
        for k in range(t, T):
            total += w * delta[k]
            if d[k]:
                break
            w *= gamma * lam
        adv[t] = total
    return adv


def test_gae_single_terminal_step():
    adv, ret = compute_gae([2.0], [0.5], [True], 7.0, 0.95, 0.99)
    assert adv[0] == 1.5 and ret[0] == 2.0


def test_gae_all_zero():
    adv, _ = compute_gae(np.zeros(10), np.zeros(10), np.zeros(10, bool), 0.0, 0.95, 0.99)
    assert np.all(adv == 0)


def test_gae_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        T = int(rng.integers(1, 51))
        r, v = rng.normal(size=T), rng.normal(size=T)
        d = rng.random(T) < 0.1
        boot = rng.normal()
        g, lam = rng.uniform(0.5, 1), rng.uniform(0, 1)
        adv, ret = compute_gae(r, v, d, boot, g, lam)
        np.testing.assert_allclose(adv, brute_force_gae(r, v, d, boot, g, lam), rtol=0, atol=1e-10)
        np.testing.assert_allclose(ret, adv + v, rtol=0, atol=0)


def test_gae_batched_columns_independent():
    rng = np.random.default_rng(1)
    r, v = rng.normal(size=(12, 3)), rng.normal(size=(12, 3))
    d = rng.random((12, 3)) < 0.2
    boot = rng.normal(size=3)
    adv, _ = compute_gae(r, v, d, boot, 0.95, 0.99)
    for j in range(3):
        np.testing.assert_array_equal(adv[:, j], compute_gae(r[:, j], v[:, j], d[:, j], boot[j], 0.95, 0.99)[0])


def test_gae_length_mismatch():
    with pytest.raises(LengthMismatch):
        compute_gae(np.zeros(3), np.zeros(4), np.zeros(3, bool), 0.0, 0.9, 0.9)
    with pytest.raises(LengthMismatch):
        compute_gae(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros((3, 2), bool), np.zeros(3), 0.9, 0.9)


def test_ppo_surrogate_examples():
    assert ppo_surrogate(0.3, 0.3, 1.7, 0.2) == 1.7
    assert ppo_surrogate(np.log(2.0), 0.0, 1.0, 0.2) == pytest.approx(1.2, abs=1e-15)
    assert ppo_surrogate(np.log(0.5), 0.0, -1.0, 0.2) == pytest.approx(-0.8, abs=1e-15)


@given(new=st.floats(-3, 3), old=st.floats(-3, 3), adv=st.floats(-5, 5), shift=st.floats(-50, 50))
def test_ppo_surrogate_shift_invariant(new, old, adv, shift):
    a = ppo_surrogate(new, old, adv, 0.2)
    b = ppo_surrogate(new + shift, old + shift, adv, 0.2)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=30)
@given(seed=st.integers(0, 1000), scale=st.floats(0.1, 100))
def test_advantage_normalization_removes_scale(seed, scale):
    adv = np.random.default_rng(seed).normal(size=64)
    # the 1e-8 std guard makes this exact only up to ~1e-8 / (scale * std)
    np.testing.assert_allclose(normalize_advantages(adv * scale), normalize_advantages(adv), rtol=1e-6, atol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(num_envs=4, horizon=4, minibatch_size=32)
    with pytest.raises(ValueError):
        PpoConfig(gamma=0.0)
    cfg = PpoConfig()
    assert (cfg.gamma, cfg.gae_lambda, cfg.clip, cfg.learning_rate) == (0.95, 0.99, 0.2, 3e-4)
    assert (cfg.minibatch_size, cfg.mini_epochs, cfg.vf_coef, cfg.ent_coef) == (32768, 5, 0.001, 0.0)


def _toy_trainer(lr=3e-4, seed=0):
    cfg = PpoConfig(num_envs=16, horizon=20, minibatch_size=80, hidden=(16, 16), learning_rate=lr,
                    init_log_std=-0.5)
    return PpoTrainer(PointMassEnv(16, seed=seed), cfg, seed=seed)


def test_zero_learning_rate_keeps_parameters():
    tr = _toy_trainer(lr=0.0)
    before = np.concatenate([a.ravel() for a in tr._params()]).copy()
    tr.train_iteration()
    after = np.concatenate([a.ravel() for a in tr._params()])
    assert before.tobytes() == after.tobytes()


def test_trainer_deterministic():
    def run():
        tr = _toy_trainer(seed=3)
        stats = [tr.train_iteration() for _ in range(3)]
        return [(s["mean_return"], s["policy_loss"], s["value_loss"], s["clip_fraction"]) for s in stats]
    assert run() == run()


def test_entropy_term_zero_by_default():
    from bezgym.rl.ppo import ppo_loss_and_grads
    tr = _toy_trainer()
    rng = np.random.default_rng(0)
    obs, act = rng.normal(size=(8, 1)), rng.normal(size=(8, 1))
    args = (obs, act, rng.normal(size=8), rng.normal(size=8), rng.normal(size=8))
    base = ppo_loss_and_grads(tr.actor, tr.critic, *args, tr.config)
    assert base[0] == base[3]["policy_loss"] + tr.config.vf_coef * base[3]["value_loss"]


def test_toy_optimum_closed_form():
    # independent numeric oracle: average over a fine grid of start positions
    x0 = np.linspace(-1, 1, 200001)
    x, total = x0.copy(), np.zeros_like(x0)
    for _ in range(20):
        x = x - np.sign(x) * np.minimum(np.abs(x), 0.1)
        total += 1 - np.abs(x)
    assert optimal_return() == pytest.approx(18.575, abs=1e-12)
    assert total.mean() == pytest.approx(optimal_return(), abs=1e-4)


def test_toy_learning_quick():
    tr = _toy_trainer(lr=1e-3, seed=1)
    returns = [tr.train_iteration()["mean_return"] for _ in range(120)]
    assert np.mean(returns[-10:]) >= 0.9 * optimal_return()


# --- AMP -------------------------------------------------------------------


@pytest.fixture(scope="module")
def model():
    return build_canonical_model()


def test_amp_feature_layout(model):
    w = make_world(model)
    f = amp_features(w, w, model, dt=1 / 120)
    assert f.shape == (feature_size(9),) == (22,)
    assert np.all(f[9:18] == 0) and np.all(f[19:21] == 0)


def test_clip_features_finite_difference(model):
    clip = procedural_jump_clip(model)
    f = clip.features()
    q = clip.frames[:, :-1]
    np.testing.assert_allclose(f[:, 9:18], (q[1:] - q[:-1]) / clip.dt)
    np.testing.assert_allclose(f[:, 19], 0.0)
    np.testing.assert_allclose(f[:, 20], (clip.frames[1:, -1] - clip.frames[:-1, -1]) / clip.dt)


def test_jump_clip_has_flight(model):
    clip = procedural_jump_clip(model)
    h = clip.frames[:, -1]
    assert h.max() > clip.frames[0, -1] + 0.05
    clip.check_model(model)


def test_clip_text_roundtrip(model, tmp_path):
    clip = procedural_jump_clip(model)
    path = tmp_path / "jump.clip"
    clip.save(path)
    back = parse_motion_clip(path.read_text())
    assert back.dt == clip.dt and back.joints == clip.joints
    np.testing.assert_array_equal(back.frames, clip.frames)


def test_clip_errors(model):
    with pytest.raises(ParseError) as err:
        parse_motion_clip("dt=0.1\njoints=a,b\n0 1 2\n0 1\n")
    assert err.value.line == 4
    with pytest.raises(ValidationError):
        parse_motion_clip("dt=0.1\njoints=a,b\n0 1 2\n")
    clip = MotionClip(0.1, ("b", "a"), np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        clip.check_model(model)


def test_style_reward_examples():
    assert style_reward(1.0) == 1.0
    assert style_reward(-1.0) == 0.0
    assert style_reward(3.0) == 0.0


def test_style_reward_range():
    d = np.random.default_rng(0).normal(0, 5, 100_000)
    r = style_reward(d)
    assert np.all((r >= 0) & (r <= 1))


def _disc_run(real_mu, fake_mu, steps=200, seed=0):
    rng = np.random.default_rng(seed)
    cfg = AmpConfig(hidden=(32, 32), learning_rate=1e-3)
    disc = discriminator_init(4, rng, cfg)
    opt = Adam(disc.arrays(), lr=cfg.learning_rate)
    for _ in range(steps):
        real = rng.normal(real_mu, 1.0, (128, 4))
        fake = rng.normal(fake_mu, 1.0, (128, 4))
        _, stats = discriminator_step(disc, opt, real, fake, cfg)
    real = rng.normal(real_mu, 1.0, (4000, 4))
    fake = rng.normal(fake_mu, 1.0, (4000, 4))
    return discriminator_loss_and_grads(disc, real, fake, 0.0)[2]["disc_accuracy"]


def test_discriminator_separates():
    assert _disc_run(2.0, -2.0) >= 0.95


def test_discriminator_chance_when_identical():
    assert abs(_disc_run(0.0, 0.0) - 0.5) <= 0.05


def test_zero_gp_coefficient_adds_nothing():
    rng = np.random.default_rng(0)
    disc = discriminator_init(3, rng, AmpConfig(hidden=(8,)))
    real, fake = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    _, g0, s0 = discriminator_loss_and_grads(disc, real, fake, 0.0)
    assert s0["grad_penalty"] == 0.0
    _, cache = forward(disc, real)
    pen, _, _ = input_gradient_penalty(disc, cache, 0.0)
    assert pen == 0.0


def test_amp_config_weights():
    with pytest.raises(ValueError):
        AmpConfig(w_task=0.0, w_style=0.0)
    with pytest.raises(ValueError):
        AmpConfig(w_task=-1.0)
