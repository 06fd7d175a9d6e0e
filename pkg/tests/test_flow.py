import json

import numpy as np
import pytest
from sklearn.base import clone

from drivecoc._validation import ValidationError
from drivecoc.flow import (
    ExactTargetField,
    FlowMatchingExpert,
    SamplingError,
    ScheduleSpec,
    VectorFieldNet,
    cfm_batch_loss,
    cfm_loss,
    euler_integrate,
    euler_sample,
    ot_path,
    sample_schedule,
)


def test_path_endpoints(rng):
    a, eps = rng.standard_normal(128), rng.standard_normal(128)
    assert np.array_equal(ot_path(a, eps, 0.0), eps)
    assert np.array_equal(ot_path(a, eps, 1.0), a)


@pytest.mark.parametrize("delta", [0.1, 0.2, 0.25, 0.5, 1.0])
def test_exact_field_lands_on_target(delta, rng):
    target = rng.uniform(-1, 1, 128)
    out = euler_integrate(ExactTargetField(target), rng.standard_normal(128), None, delta)
    assert np.max(np.abs(out - target)) < 1e-12


def test_bad_step_count():
    with pytest.raises(ValidationError):
        euler_integrate(ExactTargetField(np.zeros(4)), np.zeros(4), None, 0.3)


def test_non_finite_field_names_step(rng):
    def field(a, t, cond):
        return np.full_like(a, np.nan) if t >= 0.3 - 1e-9 else np.zeros_like(a)

    with pytest.raises(SamplingError) as err:
        euler_sample(field, None, 0.1, rng)
    assert err.value.step == 3


def test_sample_clamps_to_codec_bounds(rng):
    out = euler_sample(ExactTargetField(np.full(128, 100.0)), None, 0.1, rng)
    assert np.all(out.accel == 10.0) and np.all(out.curvature == 0.2)


def test_schedule_uniform_reduction():
    t = sample_schedule(ScheduleSpec(1.0, 1.0, 1.0), np.random.default_rng(0), 100_000)
    assert abs(t.mean() - 0.5) < 0.01


def test_schedule_shift_bound_and_mean():
    spec = ScheduleSpec()
    t = sample_schedule(spec, np.random.default_rng(1), 100_000)
    assert t.max() <= 0.999
    assert t.mean() == pytest.approx(0.999 * 0.6, abs=0.005)


def test_schedule_validation():
    with pytest.raises(ValidationError):
        ScheduleSpec(alpha=0.0)
    with pytest.raises(ValidationError):
        ScheduleSpec(shift=1.5)


def test_oracle_net_has_zero_loss(rng):
    a = rng.uniform(-1, 1, 128)

    def oracle(a_t, t, cond=None):
        t = np.asarray(t, dtype=float)[:, None]
        return (a - a_t) / (1.0 - t)

    assert cfm_loss(oracle, a, None, rng) == pytest.approx(0.0, abs=1e-18)


def test_zero_net_loss_is_chi_square_mean():
    rng = np.random.default_rng(2)
    zero = lambda a_t, t, cond=None: np.zeros_like(a_t)  # noqa: E731
    losses = [cfm_loss(zero, np.zeros(128), None, rng) for _ in range(2000)]
    assert np.mean(losses) == pytest.approx(128.0, rel=0.05)


def tiny_net(seed=0):
    net = VectorFieldNet(control_dim=4, cond_dim=2, time_dim=4, widths=(5, 6), seed=seed)
    r = np.random.default_rng(seed + 1)
    net.params[-2] = 0.1 * r.standard_normal(net.params[-2].shape)
    net.params[-1] = 0.1 * r.standard_normal(net.params[-1].shape)
    for i in range(1, 2 * net.n_layers, 2):
        net.params[i] = 0.1 * r.standard_normal(net.params[i].shape)
    return net


def numeric_grad(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_cfm_gradient_matches_finite_differences():
    net = tiny_net()
    rng = np.random.default_rng(5)
    a = rng.uniform(-1, 1, (3, 4))
    cond = rng.standard_normal(2)
    t = np.array([0.1, 0.5, 0.9])
    eps = rng.standard_normal((3, 4))
    _, grads = cfm_batch_loss(net, a, cond, t, eps, grad=True)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = net.get_flat()

    def loss_at(w):
        net.set_flat(w)
        return cfm_batch_loss(net, a, cond, t, eps)

    numeric = numeric_grad(loss_at, flat)
    net.set_flat(flat)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic + numeric)
    assert rel < 1e-4


def test_cfm_loss_gradient_under_seeded_rng():
    net = tiny_net(3)
    a = np.linspace(-1, 1, 4)
    cond = np.array([0.5, -0.5])
    _, grads = cfm_loss(net, a, cond, np.random.default_rng(9), grad=True)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = net.get_flat()

    def loss_at(w):
        net.set_flat(w)
        return cfm_loss(net, a, cond, np.random.default_rng(9))

    numeric = numeric_grad(loss_at, flat)
    net.set_flat(flat)
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic + numeric) < 1e-4


def small_expert(**kw):
    params = dict(hidden_width=32, time_dim=8, n_steps=300, batch_size=16, random_state=0)
    params.update(kw)
    return FlowMatchingExpert(**params)


def test_training_loss_decreases_on_fixed_target():
    Y = np.tile(np.r_[1.0, 0.05], 64)[None, :].repeat(8, axis=0)
    est = small_expert().fit(None, Y)
    curve = est.loss_curve_
    assert curve[-50:].mean() < 0.5 * curve[:50].mean()


def test_sampling_is_deterministic():
    Y = np.tile(np.r_[0.5, 0.0], 64)[None, :].repeat(4, axis=0)
    est = small_expert(n_steps=50).fit(None, Y)
    s1 = est.sample(None, n_samples=3, random_state=4)
    s2 = est.sample(None, n_samples=3, random_state=4)
    assert np.array_equal(s1, s2)
    assert not np.array_equal(s1[0], s1[1])


def test_checkpoint_format_and_round_trip(tmp_path):
    X = np.array([[0.0], [1.0]])
    Y = np.vstack([np.tile([1.0, 0.0], 64), np.tile([-1.0, 0.0], 64)])
    est = small_expert(n_steps=40).fit(X, Y)
    bin_path, json_path = est.save(tmp_path / "ckpt")
    sidecar = json.loads(json_path.read_text())
    n_floats = sum(int(np.prod(s)) for s in sidecar["shapes"])
    assert bin_path.stat().st_size == 4 * n_floats
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    assert np.allclose(raw, est.net_.get_flat(), atol=1e-6)
    loaded = FlowMatchingExpert.load(tmp_path / "ckpt")
    assert loaded.get_params() == est.get_params()
    a = loaded.sample(X, random_state=1)
    b = est.sample(X, random_state=1)
    assert np.allclose(a, b, atol=1e-3)


def test_estimator_api():
    est = small_expert()
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(ValueError):
        est.fit(np.zeros((3, 1)), np.zeros((2, 128)))
