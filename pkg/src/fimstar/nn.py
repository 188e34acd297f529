"""Small float64 MLP stack with hand-written reverse and forward mode.

Batches are row-major: inputs have shape (B, in_width).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
CKPT_VERSION = "fimstar-ckpt-1"


class Mlp:
    """Affine layers with ReLU between them and an identity output."""

    def __init__(self, widths, rng: np.random.Generator | None = None, final_scale: float | None = None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        self.widths = widths
        rng = np.random.default_rng(0) if rng is None else rng
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if final_scale is not None and i == len(widths) - 2:
                bound = final_scale
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def n_weights(self) -> int:
        return sum(a * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    @property
    def n_params(self) -> int:
        return self.n_weights + sum(self.widths[1:])

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * self.num_layers:
            raise ValueError("parameter list does not match architecture")
        for i in range(self.num_layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValueError("parameter shapes do not match architecture")
            self.weights[i] = np.array(w, dtype=float)
            self.biases[i] = np.array(b, dtype=float)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec: np.ndarray) -> None:
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {vec.shape}")
        out, i = [], 0
        for p in self.params():
            out.append(vec[i:i + p.size].reshape(p.shape))
            i += p.size
        self.set_params(out)

    def copy(self) -> Mlp:
        clone = Mlp.__new__(Mlp)
        clone.widths = list(self.widths)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def same_architecture(self, other: Mlp) -> bool:
        return self.widths == other.widths

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.widths[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.widths[0]}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cache(x)[0]

    def forward_cache(self, x: np.ndarray):
        """Output plus the per-layer activations needed by :meth:`backward`."""
        h = self._check_input(x)
        acts, pre = [h], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < self.num_layers - 1 else z
            acts.append(h)
        return h, (acts, pre)

    def backward(self, cache, grad_out: np.ndarray, tangent_acts=None, input_cols=slice(None)):
        """Reverse-mode pass. Returns ``(param_grads, grad_input)``.

        ``input_cols`` restricts which input columns get a gradient; pass
        ``None`` to skip the input gradient entirely.

        With ``tangent_acts`` (from :meth:`input_jvp`) the same pass yields the
        parameter gradient of ``sum(grad_out * output_tangent)``; biases then
        get zero gradient because ReLU masks are locally constant.
        """
        acts, pre = cache
        grads = [None] * (2 * self.num_layers)
        delta = np.asarray(grad_out, dtype=float)
        for i in reversed(range(self.num_layers)):
            if i < self.num_layers - 1:
                delta = delta * (pre[i] > 0)
            inp = acts[i] if tangent_acts is None else tangent_acts[i]
            grads[2 * i] = inp.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0) if tangent_acts is None else np.zeros_like(self.biases[i])
            if i > 0:
                delta = delta @ self.weights[i].T
        if input_cols is None:
            return grads, None
        return grads, delta @ self.weights[0][input_cols].T

    def input_jvp(self, cache, dx: np.ndarray):
        """Forward-mode along an input direction; returns (output tangent, tangent activations)."""
        _, pre = cache
        dh = np.asarray(dx, dtype=float)
        tangents = [dh]
        for i, w in enumerate(self.weights):
            dz = dh @ w
            dh = dz * (pre[i] > 0) if i < self.num_layers - 1 else dz
            tangents.append(dh)
        return dh, tangents

    def param_jvp(self, cache, direction: list[np.ndarray]) -> np.ndarray:
        """Output tangent for a step along ``direction`` in parameter space."""
        acts, pre = cache
        dh = np.zeros_like(acts[0])
        for i, w in enumerate(self.weights):
            dw, db = direction[2 * i], direction[2 * i + 1]
            dz = acts[i] @ dw + dh @ w + db
            dh = dz * (pre[i] > 0) if i < self.num_layers - 1 else dz
        return dh


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """In place: theta_target <- tau * theta_source + (1 - tau) * theta_target."""
    if not target.same_architecture(source):
        raise ValueError("soft_update needs matching architectures")
    for i in range(target.num_layers):
        target.weights[i] = tau * source.weights[i] + (1.0 - tau) * target.weights[i]
        target.biases[i] = tau * source.biases[i] + (1.0 - tau) * target.biases[i]
    return target


class Sgd:
    """theta <- theta - lr * grad."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        return [p - self.lr * g for p, g in zip(params, grads)]


class Adam:
    """Adam with bias correction; state is created lazily on the first step."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def add_scaled(params: list[np.ndarray], grads: list[np.ndarray], scale: float) -> list[np.ndarray]:
    return [p + scale * g for p, g in zip(params, grads)]


@dataclass
class GaussianPolicyOutput:
    mean: np.ndarray
    log_std: np.ndarray
    noise: np.ndarray
    pre_tanh: np.ndarray
    sampled_action: np.ndarray
    log_prob: np.ndarray
    log_std_raw: np.ndarray
    cache: tuple


def squashed_gaussian(policy: Mlp, state: np.ndarray, noise: np.ndarray) -> GaussianPolicyOutput:
    """Reparameterised tanh-Gaussian sample with given standard-normal ``noise``."""
    out, cache = policy.forward_cache(state)
    d = out.shape[-1] // 2
    mean, raw_ls = out[:, :d], out[:, d:]
    log_std = np.clip(raw_ls, LOG_STD_MIN, LOG_STD_MAX)
    noise = np.broadcast_to(noise, mean.shape)
    x = mean + np.exp(log_std) * noise
    a = np.tanh(x)
    gauss = -0.5 * noise ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)
    logp = gauss.sum(axis=1) - np.log(1.0 - a ** 2 + SQUASH_EPS).sum(axis=1)
    return GaussianPolicyOutput(mean, log_std, noise, x, a, logp, raw_ls, cache)


def sample_squashed_gaussian(policy: Mlp, state: np.ndarray, rng: np.random.Generator) -> GaussianPolicyOutput:
    state = np.atleast_2d(state)
    d = policy.widths[-1] // 2
    return squashed_gaussian(policy, state, rng.standard_normal((state.shape[0], d)))


def squashed_gaussian_backward(out: GaussianPolicyOutput, d_action: np.ndarray, d_logp: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the policy network output (mean || raw log-std)."""
    a = out.sampled_action
    one_m = 1.0 - a ** 2
    d_logp = np.asarray(d_logp, dtype=float).reshape(-1, 1)
    dx = d_action * one_m + d_logp * (2.0 * a * one_m / (one_m + SQUASH_EPS))
    std = np.exp(out.log_std)
    d_ls = dx * std * out.noise - d_logp
    inside = (out.log_std_raw >= LOG_STD_MIN) & (out.log_std_raw <= LOG_STD_MAX)
    return np.concatenate([dx, d_ls * inside], axis=1)


def deterministic_action(policy: Mlp, state: np.ndarray) -> np.ndarray:
    out = policy.forward(np.atleast_2d(state))
    return np.tanh(out[:, : out.shape[-1] // 2])


def save_checkpoint(path, networks: dict[str, Mlp]) -> None:
    """Little-endian header length (u64), JSON header, then float64 parameter blocks."""
    header = {"version": CKPT_VERSION, "networks": []}
    blobs, offset = [], 0
    for name, net in networks.items():
        flat = net.flat()
        header["networks"].append({
            "name": name,
            "widths": net.widths,
            "layers": [[list(w.shape), list(b.shape)] for w, b in zip(net.weights, net.biases)],
            "offset": offset,
            "count": int(flat.size),
        })
        blobs.append(flat.astype("<f8").tobytes())
        offset += flat.size
    raw = json.dumps(header, sort_keys=True).encode()
    Path(path).write_bytes(struct.pack("<Q", len(raw)) + raw + b"".join(blobs))


def load_checkpoint(path) -> dict[str, Mlp]:
    data = Path(path).read_bytes()
    (n,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8:8 + n])
    if header.get("version") != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
    values = np.frombuffer(data[8 + n:], dtype="<f8")
    nets = {}
    for entry in header["networks"]:
        net = Mlp(entry["widths"])
        net.set_flat(values[entry["offset"]:entry["offset"] + entry["count"]].astype(float))
        nets[entry["name"]] = net
    return nets
