"""Small fully connected vector-field network with hand-written backprop."""

import json
from pathlib import Path

import numpy as np

__all__ = ["VectorFieldNet", "Adam", "time_embedding", "save_checkpoint", "load_checkpoint"]


def time_embedding(t, dim):
    """Sinusoidal features ``[sin(f_k t), cos(f_k t)]`` with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.geomspace(1.0, 100.0, half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s, s


class VectorFieldNet:
    """MLP ``[a_t, emb(t), cond] -> v`` with SiLU hidden activations.

    ``widths`` lists the hidden layer sizes; with the default two hidden
    layers the net has three weight layers. Two linear read-outs of the time
    features are added to the output: a bias ``r(t) @ T`` and a gain
    ``(r(t) @ G) * a_t`` on the noisy input, where ``r(t)`` is the sinusoidal
    embedding extended with ``1/(1-t)``. The optimal field on the OT path is
    ``(E[a | a_t] - a_t) / (1 - t)``, which additive time features alone
    represent poorly.
    """

    def __init__(self, control_dim=128, cond_dim=0, time_dim=32, widths=(256, 256), seed=0, dtype=np.float64):
        self.control_dim = control_dim
        self.cond_dim = cond_dim
        self.time_dim = time_dim
        self.widths = tuple(widths)
        rng = np.random.default_rng(seed)
        sizes = [control_dim + time_dim + cond_dim, *self.widths, control_dim]
        self.params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            W = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, fan_out)).astype(dtype)
            self.params.extend([W, np.zeros(fan_out, dtype=dtype)])
        self.n_layers = len(self.params) // 2
        self.params.append(np.zeros((time_dim + 1, control_dim), dtype=dtype))  # time bias T
        self.params.append(np.zeros((time_dim + 1, control_dim), dtype=dtype))  # time gain G

    @property
    def input_dim(self):
        return self.control_dim + self.time_dim + self.cond_dim

    def _inputs(self, a_t, t, cond):
        a_t = np.atleast_2d(a_t)
        n = len(a_t)
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        parts = [a_t, time_embedding(t, self.time_dim)]
        if self.cond_dim:
            cond = np.asarray(cond, dtype=float)
            parts.append(np.broadcast_to(np.atleast_2d(cond), (n, self.cond_dim)))
        return np.concatenate(parts, axis=1)

    def forward(self, a_t, t, cond=None):
        h = self._inputs(a_t, t, cond)
        cache = [h]
        n_layers = self.n_layers
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = h @ W + b
            if layer < n_layers - 1:
                h, sig = _silu(z)
                cache.append((z, sig, h))
            else:
                h = z
        emb = self._readout_features(cache[0], t)
        cache.append(emb)
        a = cache[0][:, :self.control_dim]
        T, G = self.params[-2], self.params[-1]
        out = h + emb @ T + (emb @ G) * a
        return out, cache

    def _readout_features(self, inputs, t):
        n = len(inputs)
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        emb = inputs[:, self.control_dim:self.control_dim + self.time_dim]
        # t < 1 always: the schedule shift keeps training times below 1 and the
        # sampler never evaluates the field at t = 1
        return np.column_stack([emb, 1.0 / (1.0 - t)])

    def __call__(self, a_t, t, cond=None):
        squeeze = np.ndim(a_t) == 1
        out, _ = self.forward(a_t, t, cond)
        return out[0] if squeeze else out

    def backward(self, cache, grad_out):
        """Gradients of ``sum(grad_out * output)`` w.r.t. every parameter."""
        grads = [None] * len(self.params)
        n_layers = self.n_layers
        emb = cache[-1]
        a = cache[0][:, :self.control_dim]
        grads[-2] = emb.T @ grad_out
        grads[-1] = emb.T @ (grad_out * a)
        g = grad_out
        for layer in reversed(range(n_layers)):
            h_in = cache[0] if layer == 0 else cache[layer][2]
            W = self.params[2 * layer]
            grads[2 * layer] = h_in.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                z, sig, _ = cache[layer]
                g = (g @ W.T) * (sig * (1.0 + z * (1.0 - sig)))
        return grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        offset = 0
        for i, p in enumerate(self.params):
            self.params[i] = np.asarray(flat[offset:offset + p.size], dtype=p.dtype).reshape(p.shape)
            offset += p.size


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_checkpoint(net, path, meta=None):
    """Write ``<path>.bin`` (little-endian float32) and ``<path>.json`` (shapes)."""
    path = Path(path)
    flat = net.get_flat().astype("<f4")
    path.with_suffix(".bin").write_bytes(flat.tobytes())
    sidecar = {
        "format": "f32le",
        "shapes": [list(p.shape) for p in net.params],
        "control_dim": net.control_dim,
        "cond_dim": net.cond_dim,
        "time_dim": net.time_dim,
        "widths": list(net.widths),
        "meta": meta or {},
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path.with_suffix(".bin"), path.with_suffix(".json")


def load_checkpoint(path):
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    net = VectorFieldNet(
        sidecar["control_dim"], sidecar["cond_dim"], sidecar["time_dim"], sidecar["widths"]
    )
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f4").astype(np.float64)
    expected = sum(int(np.prod(s)) for s in sidecar["shapes"])
    if flat.size != expected:
        raise ValueError(f"checkpoint holds {flat.size} floats, sidecar expects {expected}")
    net.set_flat(flat)
    return net, sidecar["meta"]
