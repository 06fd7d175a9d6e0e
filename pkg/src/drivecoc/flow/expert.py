import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .._validation import check_controls_array
from ..codec import QuantizerSpec
from .matching import ScheduleSpec, cfm_batch_loss, euler_sample, sample_schedule
from .network import Adam, VectorFieldNet, load_checkpoint, save_checkpoint


class FlowMatchingExpert(BaseEstimator):
    """Conditional flow-matching action expert.

    ``fit(X, y)`` takes context vectors ``X`` (n, d), or ``None`` for an
    unconditional model, and interleaved control rows ``y`` (n, 128).
    ``sample`` draws one control sequence per context row by Euler
    integration of the learned field from Gaussian noise.
    """

    def __init__(
        self,
        hidden_width=256,
        time_dim=32,
        n_steps=6000,
        batch_size=64,
        learning_rate=3e-3,
        schedule_alpha=1.5,
        schedule_beta=1.0,
        schedule_shift=0.999,
        delta_t=0.1,
        control_scale=(1.0, 0.1),
        random_state=0,
    ):
        self.hidden_width = hidden_width
        self.time_dim = time_dim
        self.n_steps = n_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.schedule_alpha = schedule_alpha
        self.schedule_beta = schedule_beta
        self.schedule_shift = schedule_shift
        self.delta_t = delta_t
        self.control_scale = control_scale
        self.random_state = random_state

    def _contexts(self, X, n):
        if X is None:
            return np.zeros((n, 0))
        return check_array(X, dtype=np.float64)

    def _normalize(self, Y):
        scale = np.tile(np.asarray(self.control_scale, dtype=float), Y.shape[1] // 2)
        return Y / scale

    def fit(self, X, y):
        Y = check_controls_array(y)
        C = self._contexts(X, len(Y))
        if len(C) != len(Y):
            raise ValueError(f"X has {len(C)} rows but y has {len(Y)}")
        rng = np.random.default_rng(self.random_state)
        A = self._normalize(Y)
        schedule = ScheduleSpec(self.schedule_alpha, self.schedule_beta, self.schedule_shift)
        net = VectorFieldNet(
            A.shape[1], C.shape[1], self.time_dim, (self.hidden_width, self.hidden_width),
            seed=int(rng.integers(2**31)),
        )
        opt = Adam(net.params, lr=self.learning_rate)
        losses = np.empty(self.n_steps)
        for step in range(self.n_steps):
            opt.lr = self.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / self.n_steps))
            idx = rng.integers(len(A), size=self.batch_size)
            t = sample_schedule(schedule, rng, size=self.batch_size)
            eps = rng.standard_normal((self.batch_size, A.shape[1]))
            cond = C[idx] if C.shape[1] else None
            losses[step], grads = cfm_batch_loss(net, A[idx], cond, t, eps, grad=True)
            opt.step(net.params, grads)
        self.net_ = net
        self.loss_curve_ = losses
        self.n_features_in_ = C.shape[1]
        return self

    def sample(self, X=None, n_samples=None, random_state=None):
        """One sample per context row; ``n_samples`` repeats a single context."""
        check_is_fitted(self, "net_")
        if X is None:
            X = np.zeros((n_samples or 1, 0))
        C = check_array(np.atleast_2d(X), dtype=np.float64, ensure_min_features=0)
        if n_samples is not None and len(C) == 1:
            C = np.repeat(C, n_samples, axis=0)
        seed = self.random_state if random_state is None else random_state
        seeds = np.random.SeedSequence(seed).spawn(len(C))
        spec = QuantizerSpec()
        out = []
        for ctx, ss in zip(C, seeds):
            cond = ctx if ctx.size else None
            ctrl = euler_sample(self.net_, cond, self.delta_t, np.random.default_rng(ss), self.control_scale, spec)
            out.append(ctrl.to_row())
        return np.vstack(out)

    def predict(self, X):
        return self.sample(X)

    def save(self, path):
        check_is_fitted(self, "net_")
        return save_checkpoint(self.net_, path, meta={"params": _jsonable(self.get_params())})

    @classmethod
    def load(cls, path):
        net, meta = load_checkpoint(path)
        params = meta.get("params", {})
        if "control_scale" in params:
            params["control_scale"] = tuple(params["control_scale"])
        est = cls(**params)
        est.net_ = net
        est.n_features_in_ = net.cond_dim
        return est


def _jsonable(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}
