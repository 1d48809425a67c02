"""A small float64 feed-forward engine: dense layers, BCE, Adam and finite-difference checks.

Complex observations enter as ``[Re; Im]`` concatenations, see :func:`complex_to_real`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "tanh", "identity")


class StaleCacheError(RuntimeError):
    """A forward cache was used with parameters it was not produced from."""


def sigmoid(x):
    # split by sign so neither branch overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(kind: str, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return g * (z > 0)
    if kind == "sigmoid":
        return g * a * (1.0 - a)
    if kind == "tanh":
        return g * (1.0 - a * a)
    return g


def complex_to_real(x) -> np.ndarray:
    """Flatten trailing complex axes to a real ``[Re; Im]`` vector per batch row.

    ``x`` of shape (B, *dims) gives (B, 2*prod(dims)); a 1-d ``x`` gives one row.
    """
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    flat = x.reshape(x.shape[0], -1)
    return np.concatenate([flat.real, flat.imag], axis=1).astype(np.float64)


@dataclass(frozen=True)
class NetworkSpec:
    """``sizes[0]`` is the input width, one activation per subsequent layer."""

    sizes: tuple
    activations: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        acts = tuple(self.activations)
        if len(sizes) < 2:
            raise ValueError("a network needs an input width and at least one layer")
        if any(s < 1 for s in sizes):
            raise ValueError("layer sizes must be positive")
        if len(acts) != len(sizes) - 1:
            raise ValueError(f"need {len(sizes) - 1} activations, got {len(acts)}")
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activations {bad}; choose from {ACTIVATIONS}")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "activations", acts)

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.activations)

    @classmethod
    def mlp(cls, n_in: int, n_out: int, out_activation: str, hidden: Optional[Sequence[int]] = None,
            hidden_activation: str = "relu") -> "NetworkSpec":
        """Default head: two hidden layers of width ``4 * n_in``."""
        hidden = (4 * n_in, 4 * n_in) if hidden is None else tuple(hidden)
        return cls((n_in, *hidden, n_out), (hidden_activation,) * len(hidden) + (out_activation,))

    def to_json(self) -> dict:
        return {"sizes": list(self.sizes), "activations": list(self.activations)}

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkSpec":
        return cls(tuple(doc["sizes"]), tuple(doc["activations"]))


@dataclass
class ParamStore:
    """Per-layer weights ``(fan_in, fan_out)`` and biases ``(fan_out,)``.

    ``version`` is bumped on every in-place update so old forward caches can be detected.
    """

    weights: list
    biases: list
    version: int = 0

    @classmethod
    def init(cls, spec: NetworkSpec, rng: np.random.Generator) -> "ParamStore":
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.sizes[:-1], spec.sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @classmethod
    def zeros(cls, spec: NetworkSpec) -> "ParamStore":
        return cls([np.zeros((a, b)) for a, b in zip(spec.sizes[:-1], spec.sizes[1:])],
                   [np.zeros(b) for b in spec.sizes[1:]])

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "ParamStore":
        return ParamStore([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def check(self, spec: NetworkSpec) -> None:
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (spec.sizes[i], spec.sizes[i + 1]) or b.shape != (spec.sizes[i + 1],):
                raise ValueError(f"layer {i} parameter shapes do not match the spec")
        if len(self.weights) != spec.n_layers:
            raise ValueError("parameter count does not match the spec")
        if not all(np.isfinite(a).all() for a in self.arrays()):
            raise ValueError("non-finite parameter values")


@dataclass
class ForwardCache:
    params_id: int
    version: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)


def forward(spec: NetworkSpec, params: ParamStore, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.n_in:
        raise ValueError(f"input width {x.shape[1]} != {spec.n_in}")
    cache = ForwardCache(id(params), params.version)
    a = x
    for w, b, act in zip(params.weights, params.biases, spec.activations):
        cache.inputs.append(a)
        z = a @ w + b
        a = _activate(act, z)
        cache.pre.append(z)
        cache.post.append(a)
    return a, cache


def backward(spec: NetworkSpec, params: ParamStore, cache: ForwardCache, grad_out) -> tuple[ParamStore, np.ndarray]:
    """Reverse pass; returns parameter gradients and the gradient w.r.t. the input batch."""
    if cache.params_id != id(params) or cache.version != params.version:
        raise StaleCacheError("forward cache does not belong to these parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    gw, gb = [None] * spec.n_layers, [None] * spec.n_layers
    for i in reversed(range(spec.n_layers)):
        g = _activation_grad(spec.activations[i], cache.pre[i], cache.post[i], g)
        gw[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return ParamStore(gw, gb), g


def bce_loss(q, t, eps: float = 1e-12) -> tuple[float, np.ndarray]:
    """Batch mean of the per-frame summed binary cross-entropy, and its gradient w.r.t. ``q``."""
    q = np.clip(np.asarray(q, dtype=np.float64), eps, 1.0 - eps)
    t = np.asarray(t, dtype=np.float64)
    if q.ndim == 1:
        q, t = q[None, :], t[None, :]
    B = q.shape[0]
    loss = -np.sum(t * np.log(q) + (1.0 - t) * np.log1p(-q)) / B
    grad = (-t / q + (1.0 - t) / (1.0 - q)) / B
    return float(loss), grad


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **hyper)

    @classmethod
    def for_params(cls, params: ParamStore, **hyper) -> "AdamState":
        return cls.for_arrays(params.arrays(), **hyper)


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update applied in place; returns ``(params, state)``.

    ``params``/``grads`` are either :class:`ParamStore` objects or parallel lists of arrays.
    """
    arrays = params.arrays() if isinstance(params, ParamStore) else list(params)
    g_arrays = grads.arrays() if isinstance(grads, ParamStore) else list(grads)
    if len(arrays) != len(g_arrays) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient and optimizer state lengths differ")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(arrays, g_arrays, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if isinstance(params, ParamStore):
        params.version += 1
    return params, state


# ------------------------------------------------------------ gradient checks

@dataclass
class GradcheckReport:
    max_rel_error: float
    per_array: list
    n_checked: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def numeric_gradients(f: Callable[[], float], arrays: Sequence[np.ndarray], step: float = 1e-5) -> list:
    """Central differences of the scalar ``f()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = f()
            flat[i] = orig - step
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def compare_gradients(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                      floor: float = 1e-6) -> GradcheckReport:
    per = [float(relative_error(a, n, floor).max()) if a.size else 0.0 for a, n in zip(analytic, numeric)]
    return GradcheckReport(max(per, default=0.0), per, sum(a.size for a in analytic))


def gradcheck(spec: NetworkSpec, params: ParamStore, x, loss: Callable, step: float = 1e-5,
              floor: float = 1e-6) -> GradcheckReport:
    """Check every parameter gradient of ``loss(forward(x))`` against central differences.

    ``loss(out)`` must return ``(value, d value / d out)``.
    """
    if params.n_params() > 10_000:
        raise ValueError("gradcheck is limited to networks with at most 1e4 parameters")
    out, cache = forward(spec, params, x)
    _, g_out = loss(out)
    grads, _ = backward(spec, params, cache, g_out)

    def f():
        return loss(forward(spec, params, x)[0])[0]

    numeric = numeric_gradients(f, params.arrays(), step)
    return compare_gradients(grads.arrays(), numeric, floor)


# ------------------------------------------------------------------ checkpoints

def save_params(params: ParamStore, spec: NetworkSpec, directory, name: str) -> None:
    """Write ``<name>.bin`` (little-endian float64 blob) and ``<name>.json`` (shape manifest)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = params.arrays()
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    (directory / f"{name}.bin").write_bytes(blob)
    manifest = {"spec": spec.to_json(), "dtype": "<f8", "shapes": [list(a.shape) for a in arrays]}
    (directory / f"{name}.json").write_text(json.dumps(manifest, indent=1))


def load_params(directory, name: str) -> tuple[NetworkSpec, ParamStore]:
    directory = Path(directory)
    manifest = json.loads((directory / f"{name}.json").read_text())
    flat = np.frombuffer((directory / f"{name}.bin").read_bytes(), dtype=manifest["dtype"])
    arrays, pos = [], 0
    for shape in manifest["shapes"]:
        size = int(np.prod(shape))
        arrays.append(flat[pos:pos + size].reshape(shape).astype(np.float64))
        pos += size
    if pos != flat.size:
        raise ValueError("blob length does not match the shape manifest")
    spec = NetworkSpec.from_json(manifest["spec"])
    params = ParamStore(arrays[0::2], arrays[1::2])
    params.check(spec)
    return spec, params


def save_array(a: np.ndarray, directory, name: str) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}.bin").write_bytes(np.ascontiguousarray(a, dtype="<f8").tobytes())
    (directory / f"{name}.json").write_text(json.dumps({"dtype": "<f8", "shape": list(a.shape)}))


def load_array(directory, name: str) -> np.ndarray:
    directory = Path(directory)
    manifest = json.loads((directory / f"{name}.json").read_text())
    flat = np.frombuffer((directory / f"{name}.bin").read_bytes(), dtype=manifest["dtype"])
    return flat.reshape(manifest["shape"]).astype(np.float64)
