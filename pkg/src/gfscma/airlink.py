"""Activity, channel and noise sampling plus the superposed preamble/data observations.

Arrays are batched along a leading axis where it makes sense: ``delta`` and ``h``
may be ``(N,)`` for one frame or ``(B, N)`` for ``B`` frames.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scma_core import ScmaCodebookSet, bits_to_index


class ConfigError(ValueError):
    """Raised with every violated field listed in the message."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DimensionError(ValueError):
    pass


class MissingBitsError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    N: int
    J: int
    L: int
    K_p: int
    K_d: int = 4
    N_d: int = 16
    M: int = 4
    N_m: int = 2
    activity_prob: Optional[np.ndarray] = None
    snr_db: float = 10.0
    association: str = "round-robin"

    def __post_init__(self):
        if self.activity_prob is None:
            self.activity_prob = np.full(self.N, 3.0 / self.N if self.N else 0.0)
        p = np.asarray(self.activity_prob, dtype=np.float64)
        if p.ndim == 0:
            p = np.full(self.N, float(p))
        self.activity_prob = p
        self.validate()

    def problems(self) -> list[str]:
        out = []
        for name in ("N", "J", "L", "K_p", "K_d", "N_d", "M", "N_m"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                out.append(f"{name} must be a positive integer (got {v!r})")
        if not out and self.N != self.J * self.L:
            out.append(f"N must equal J*L ({self.N} != {self.J}*{self.L})")
        p = self.activity_prob
        if p.shape != (self.N,):
            out.append(f"activity_prob must have length N={self.N} (got shape {p.shape})")
        elif not ((p >= 0) & (p <= 1)).all():
            out.append("activity_prob entries must lie in [0, 1]")
        if not np.isfinite(self.snr_db):
            out.append("snr_db must be finite")
        if self.association not in ("round-robin", "block"):
            out.append(f"association must be 'round-robin' or 'block' (got {self.association!r})")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @property
    def N_R(self) -> int:
        return self.J * self.L

    def assoc(self) -> np.ndarray:
        return association_map(self.N, self.J, self.association)

    def to_json(self) -> dict:
        d = asdict(self)
        d["activity_prob"] = [float(x) for x in self.activity_prob]
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        problems = []
        for name in ("N", "J", "L", "K_p"):
            if name not in doc:
                problems.append(f"{name} is required")
        if problems:
            raise ConfigError(problems)
        if "activity_prob" in doc and doc["activity_prob"] is not None:
            doc["activity_prob"] = np.asarray(doc["activity_prob"], dtype=np.float64)
        return cls(**doc)


def association_map(N: int, J: int, kind: str = "round-robin") -> np.ndarray:
    """Codebook index of every preamble: ``n mod J`` (round-robin) or ``n // L`` (block)."""
    n = np.arange(N)
    if kind == "round-robin":
        return n % J
    if kind == "block":
        if N % J:
            raise ValueError("block association needs N divisible by J")
        return n // (N // J)
    raise ValueError(f"unknown association {kind!r}")


@dataclass
class PreambleSet:
    """``N`` unit-energy complex preambles of length ``K_p`` with their codebook association."""

    p: np.ndarray
    assoc: np.ndarray
    J: int

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.complex128)
        self.assoc = np.asarray(self.assoc, dtype=np.int64)
        if self.p.ndim != 2:
            raise DimensionError("preambles must be an (N, K_p) array")
        if self.assoc.shape != (self.p.shape[0],):
            raise DimensionError("assoc must have one entry per preamble")
        if self.assoc.size and (self.assoc.min() < 0 or self.assoc.max() >= self.J):
            raise ValueError("assoc entries must lie in [0, J)")

    @property
    def N(self) -> int:
        return self.p.shape[0]

    @property
    def K_p(self) -> int:
        return self.p.shape[1]

    def energies(self) -> np.ndarray:
        return np.sum(np.abs(self.p) ** 2, axis=1)

    def to_json(self) -> dict:
        return {
            "K_p": self.K_p,
            "N": self.N,
            "J": self.J,
            "preambles": np.stack([self.p.real, self.p.imag], axis=-1).tolist(),
            "assoc": [int(a) for a in self.assoc],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PreambleSet":
        raw = np.asarray(doc["preambles"], dtype=np.float64)
        ps = cls(raw[..., 0] + 1j * raw[..., 1], doc["assoc"], int(doc["J"]))
        if ps.N != int(doc["N"]) or ps.K_p != int(doc["K_p"]):
            raise DimensionError("N/K_p header does not match the preamble array")
        return ps

    def save(self, path) -> None:
        # json floats use repr, so the round trip is exact
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "PreambleSet":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ReceivedFrame:
    """Superposed preamble ``y_p`` (..., K_p) and data blocks ``y_d`` (..., N_d, K_d)."""

    y_p: np.ndarray
    y_d: np.ndarray


# ---------------------------------------------------------------- rng streams

STREAMS = ("activity", "channel", "bits", "noise_p", "noise_d")


@dataclass(frozen=True)
class FrameStreams:
    activity: np.random.Generator
    channel: np.random.Generator
    bits: np.random.Generator
    noise_p: np.random.SeedSequence
    noise_d: np.random.Generator

    def preamble_noise_rng(self) -> np.random.Generator:
        # fresh generator each call so every detector sees the same preamble noise
        return np.random.default_rng(self.noise_p)


def frame_streams(seed: int, *index: int) -> FrameStreams:
    """Independent per-purpose streams for one (seed, index...) cell."""
    root = np.random.SeedSequence([int(seed), *[int(i) for i in index]])
    ss = dict(zip(STREAMS, root.spawn(len(STREAMS))))
    return FrameStreams(
        activity=np.random.default_rng(ss["activity"]),
        channel=np.random.default_rng(ss["channel"]),
        bits=np.random.default_rng(ss["bits"]),
        noise_p=ss["noise_p"],
        noise_d=np.random.default_rng(ss["noise_d"]),
    )


# ------------------------------------------------------------------ sampling

def _shape(cfg: ScenarioConfig, size) -> tuple:
    return (cfg.N,) if size is None else (int(size), cfg.N)


def sample_activity(cfg: ScenarioConfig, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Independent Bernoulli(p_n) indicators, int8."""
    cfg.validate()
    u = rng.random(_shape(cfg, size))
    return (u < cfg.activity_prob).astype(np.int8)


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """CN(0, scale^2): real and imaginary parts each with variance scale^2 / 2."""
    shape = (int(shape),) if np.isscalar(shape) else tuple(shape)
    z = rng.standard_normal((*shape, 2))
    return scale * (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_channel(cfg: ScenarioConfig, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Rayleigh flat fading, one CN(0, 1) coefficient per user."""
    cfg.validate()
    return complex_normal(rng, _shape(cfg, size))


def sample_bits(cfg: ScenarioConfig, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform bits of shape (..., N, N_d, log2 M)."""
    n_bits = int(np.log2(cfg.M))
    return rng.integers(0, 2, size=(*_shape(cfg, size), cfg.N_d, n_bits), dtype=np.int8)


def snr_to_noise_std(snr_db: float) -> float:
    """Complex noise standard deviation for unit per-user signal energy."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    return float(10.0 ** (-snr_db / 20.0))


def superpose_preamble(ps: PreambleSet, delta, h, sigma: float, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """y_p = sum_n delta_n h_n p^(n) + CN(0, sigma^2) noise."""
    delta = np.asarray(delta)
    h = np.asarray(h)
    if delta.shape != h.shape or delta.shape[-1] != ps.N:
        raise DimensionError(f"delta {delta.shape} / h {h.shape} incompatible with N={ps.N}")
    y = (delta * h) @ ps.p
    if sigma > 0:
        if rng is None:
            raise ValueError("an rng is required when sigma > 0")
        y = y + complex_normal(rng, y.shape, sigma)
    return y


def _messages(bits, delta: np.ndarray, N_d: int, n_bits: int) -> np.ndarray:
    """Message indices of shape delta.shape + (N_d,); inactive users without bits get 0."""
    if isinstance(bits, np.ndarray) and bits.dtype != object:
        if bits.shape[:-1] != (*delta.shape, N_d) or bits.shape[-1] != n_bits:
            raise DimensionError(f"bits shape {bits.shape} != {(*delta.shape, N_d, n_bits)}")
        return bits_to_index(bits)
    if delta.ndim != 1:
        raise DimensionError("per-user bit lists are only accepted for a single frame")
    msgs = np.zeros((delta.size, N_d), dtype=np.int64)
    for n, active in enumerate(delta):
        b = bits[n] if n < len(bits) else None
        if b is None:
            if active:
                raise MissingBitsError(f"no data bits supplied for active user {n}")
            continue
        b = np.asarray(b)
        if b.shape != (N_d, n_bits):
            raise DimensionError(f"user {n} bits shape {b.shape} != {(N_d, n_bits)}")
        msgs[n] = bits_to_index(b)
    return msgs


def superpose_data(cbs: ScmaCodebookSet, assoc, delta, h, bits, sigma: float,
                   rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """y_i^(d) = sum_n delta_n h_n c_i^{nu(n)} + noise, shape (..., N_d, K_d)."""
    delta = np.asarray(delta)
    h = np.asarray(h)
    assoc = np.asarray(assoc)
    if delta.shape != h.shape or delta.shape[-1] != assoc.size:
        raise DimensionError(f"delta {delta.shape} / h {h.shape} incompatible with {assoc.size} users")
    n_bits = cbs.bits_per_block
    bits_arr = bits if isinstance(bits, np.ndarray) else None
    N_d = bits_arr.shape[-2] if bits_arr is not None else len(next(b for b in bits if b is not None))
    msgs = _messages(bits, delta, N_d, n_bits)
    cw = cbs.codewords[assoc[:, None], msgs]          # (..., N, N_d, K_d)
    y = np.einsum("...n,...nik->...ik", delta * h, cw)
    if sigma > 0:
        if rng is None:
            raise ValueError("an rng is required when sigma > 0")
        y = y + complex_normal(rng, y.shape, sigma)
    return y


# --------------------------------------------------------------- frame batch

@dataclass
class FrameBatch:
    """Everything about a batch of frames except the preamble set.

    The preamble observation is built per detector by :meth:`frame`, reusing the
    same noise stream, so different designs are compared on identical draws.
    """

    delta: np.ndarray
    h: np.ndarray
    bits: np.ndarray
    y_d: np.ndarray
    sigma: float
    streams: FrameStreams = field(repr=False)

    @property
    def size(self) -> int:
        return self.delta.shape[0]

    def preamble_noise(self, K_p: int) -> np.ndarray:
        return complex_normal(self.streams.preamble_noise_rng(), (self.size, K_p), self.sigma)

    def frame(self, ps: PreambleSet) -> ReceivedFrame:
        y_p = superpose_preamble(ps, self.delta, self.h, self.sigma, self.streams.preamble_noise_rng())
        return ReceivedFrame(y_p, self.y_d)


def sample_batch(cfg: ScenarioConfig, cbs: ScmaCodebookSet, snr_db: float, size: int,
                 streams: FrameStreams) -> FrameBatch:
    sigma = snr_to_noise_std(snr_db)
    delta = sample_activity(cfg, streams.activity, size)
    h = sample_channel(cfg, streams.channel, size)
    bits = sample_bits(cfg, streams.bits, size)
    y_d = superpose_data(cbs, cfg.assoc(), delta, h, bits, sigma, streams.noise_d)
    return FrameBatch(delta, h, bits, y_d, sigma, streams)
