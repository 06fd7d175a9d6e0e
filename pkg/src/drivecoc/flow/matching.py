"""Conditional flow matching on the Gaussian optimal-transport path.

Noise ``eps`` sits at ``t = 0`` and data ``a`` at ``t = 1``; the path is
``a_t = t a + (1 - t) eps`` and its target field ``a - eps`` does not depend
on ``t``.
"""

from dataclasses import dataclass

import numpy as np

from .._validation import ValidationError
from ..codec import QuantizerSpec
from ..dynamics import ControlSequence

__all__ = [
    "ScheduleSpec",
    "SamplingError",
    "sample_schedule",
    "ot_path",
    "cfm_loss",
    "cfm_batch_loss",
    "euler_integrate",
    "euler_sample",
    "ExactTargetField",
]


class SamplingError(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ScheduleSpec:
    alpha: float = 1.5
    beta: float = 1.0
    shift: float = 0.999

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValidationError("beta-schedule shape parameters must be positive", field="schedule")
        if not 0 < self.shift <= 1:
            raise ValidationError("schedule shift must lie in (0, 1]", field="shift")


def sample_schedule(spec, rng, size=None):
    """Training times ``shift * Beta(alpha, beta)``."""
    return spec.shift * rng.beta(spec.alpha, spec.beta, size=size)


def ot_path(a, eps, t):
    t = np.asarray(t, dtype=float)
    if t.ndim:
        t = t[:, None]
    return t * a + (1.0 - t) * eps


def cfm_batch_loss(net, a, cond, t, eps, grad=False):
    """Mean over the batch of ``||v(a_t, t, cond) - (a - eps)||^2``.

    With ``grad=True`` also returns parameter gradients (only for
    :class:`VectorFieldNet`-style nets exposing ``forward``/``backward``).
    """
    a = np.atleast_2d(a)
    eps = np.atleast_2d(eps)
    a_t = ot_path(a, eps, t)
    target = a - eps
    if not grad:
        pred = net(a_t, t, cond)
        return float(np.mean(np.sum((pred - target) ** 2, axis=1)))
    pred, cache = net.forward(a_t, t, cond)
    resid = pred - target
    loss = float(np.mean(np.sum(resid ** 2, axis=1)))
    grads = net.backward(cache, 2.0 * resid / len(a))
    return loss, grads


def cfm_loss(net, a, condition, rng, schedule=None, grad=False):
    """Single-sample flow-matching loss with ``t`` and ``eps`` drawn from ``rng``."""
    schedule = schedule or ScheduleSpec()
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValidationError("flow-matching target must be finite", field="a")
    t = np.array([sample_schedule(schedule, rng)])
    eps = rng.standard_normal(a.shape)
    return cfm_batch_loss(net, a[None, :], condition, t, eps[None, :], grad=grad)


def _n_steps(delta_t):
    n = int(round(1.0 / delta_t))
    if n < 1 or abs(n * delta_t - 1.0) > 1e-9:
        raise ValidationError("1/delta_t must be a positive integer", field="delta_t", value=delta_t)
    return n


def euler_integrate(field, a0, condition, delta_t):
    """Integrate ``da/dt = field(a, t, cond)`` from t = 0 to 1 with fixed steps."""
    n = _n_steps(delta_t)
    a = np.array(a0, dtype=float)
    for k in range(n):
        v = np.asarray(field(a, k * delta_t, condition), dtype=float)
        if not np.all(np.isfinite(v)):
            raise SamplingError(f"vector field returned non-finite values at step {k}", step=k)
        a = a + delta_t * v
    return a


def euler_sample(field, condition, delta_t, rng, scale=(1.0, 1.0), spec=None):
    """Draw ``a_0 ~ N(0, I)``, integrate to t = 1 and map to clamped controls.

    ``scale`` converts the network's normalized (acceleration, curvature)
    channels back to physical units.
    """
    spec = spec or QuantizerSpec()
    dim = getattr(field, "control_dim", 128)
    a0 = rng.standard_normal(dim)
    a1 = euler_integrate(field, a0, condition, delta_t)
    pairs = a1.reshape(-1, 2) * np.asarray(scale, dtype=float)
    pairs = np.clip(pairs, spec.lo, spec.hi)
    return ControlSequence(pairs)


class ExactTargetField:
    """Oracle field ``a* - eps`` for the OT path, with ``eps`` the starting noise.

    For a fixed ``eps`` the target field is constant along the path, so any
    Euler schedule with steps summing to one lands exactly on ``a*``.
    """

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)
        self.control_dim = self.target.size
        self._eps = None

    def __call__(self, a, t, cond=None):
        if t == 0:
            self._eps = np.array(a, dtype=float)
        return self.target - self._eps
