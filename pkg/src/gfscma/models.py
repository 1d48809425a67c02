"""Preamble generation and activity-detection networks, and their joint or receiver-only training.

Three variants are supported:

``preamble-based``
    trainable preamble table + AUDN fed with the superposed preamble only.
``data-aided-joint``
    trainable preamble table + UAEN on the superposed data + AUDN on ``[alpha, y_p]``.
``data-aided-independent``
    a frozen, externally designed preamble set + the same UAEN/AUDN receiver.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import nn
from .airlink import (FrameBatch, PreambleSet, ReceivedFrame, ScenarioConfig, association_map,
                      complex_normal, frame_streams, sample_batch)
from .scma_core import ScmaCodebookSet, build_codebook_set, build_mapping_matrix

log = logging.getLogger(__name__)

VARIANTS = ("preamble-based", "data-aided-joint", "data-aided-independent")
THRESHOLD = 0.5


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 256
    iterations: int = 5000
    snr_range: tuple = (4.0, 14.0)
    lr: float = 1e-3
    aux_weight: float = 0.5
    seed: int = 0
    hidden: Optional[tuple] = None
    log_every: int = 100

    def __post_init__(self):
        self.snr_range = tuple(float(s) for s in self.snr_range)
        problems = []
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.iterations < 0:
            problems.append("iterations must be >= 0")
        if len(self.snr_range) != 2 or self.snr_range[0] > self.snr_range[1]:
            problems.append("snr_range must be a (low, high) pair with low <= high")
        if self.aux_weight < 0:
            problems.append("aux_weight must be >= 0")
        if self.lr <= 0:
            problems.append("lr must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    def to_json(self) -> dict:
        d = asdict(self)
        d["snr_range"] = list(self.snr_range)
        d["hidden"] = None if self.hidden is None else list(self.hidden)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if doc.get("hidden") is not None:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


# ------------------------------------------------------------ preamble table

@dataclass
class PreambleTable:
    """Trainable ``(N, 2*K_p)`` real table; row n is ``[Re p_n, Im p_n]`` before normalization."""

    raw: np.ndarray

    @classmethod
    def init(cls, N: int, K_p: int, rng: np.random.Generator) -> "PreambleTable":
        return cls(rng.standard_normal((N, 2 * K_p)))

    @property
    def N(self) -> int:
        return self.raw.shape[0]

    @property
    def K_p(self) -> int:
        return self.raw.shape[1] // 2

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        norms = np.linalg.norm(self.raw, axis=1, keepdims=True)
        return self.raw / norms, norms

    def preambles(self) -> np.ndarray:
        P, _ = self.normalized()
        return P[:, :self.K_p] + 1j * P[:, self.K_p:]

    def backward(self, grad_p: np.ndarray) -> np.ndarray:
        """Map a complex gradient w.r.t. the normalized preambles onto ``raw``."""
        P, norms = self.normalized()
        gP = np.concatenate([grad_p.real, grad_p.imag], axis=1)
        radial = np.sum(P * gP, axis=1, keepdims=True)
        return (gP - P * radial) / norms


def pgn_forward(table: PreambleTable, delta) -> np.ndarray:
    """Gated preamble output: the normalized row where ``delta_n = 1``, zeros elsewhere."""
    delta = np.asarray(delta)
    if delta.shape[-1] != table.N:
        raise ValueError(f"activity length {delta.shape[-1]} != table rows {table.N}")
    return delta[..., None] * table.preambles()


# ---------------------------------------------------------------- the system

@dataclass
class AudSystem:
    variant: str
    scenario: ScenarioConfig
    cbs: ScmaCodebookSet
    audn_spec: nn.NetworkSpec
    audn: nn.ParamStore
    table: Optional[PreambleTable] = None
    frozen: Optional[PreambleSet] = None
    uaen_spec: Optional[nn.NetworkSpec] = None
    uaen: Optional[nn.ParamStore] = None
    train_config: Optional[TrainConfig] = None
    loss_log: list = field(default_factory=list)

    @property
    def data_aided(self) -> bool:
        return self.uaen is not None

    @property
    def trainable_preambles(self) -> bool:
        return self.table is not None

    def preamble_set(self) -> PreambleSet:
        return extract_preambles(self)


def build_system(variant: str, scenario: ScenarioConfig, rng: np.random.Generator,
                 preambles: Optional[PreambleSet] = None, cbs: Optional[ScmaCodebookSet] = None,
                 hidden: Optional[tuple] = None) -> AudSystem:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    sc = scenario
    if cbs is None:
        cbs = build_codebook_set(build_mapping_matrix(sc.K_d, sc.J, sc.N_m), sc.M)
    table = frozen = uaen_spec = uaen = None
    if variant == "data-aided-independent":
        if preambles is None:
            raise ValueError("the independent variant needs a frozen preamble set")
        if preambles.N != sc.N or preambles.K_p != sc.K_p:
            raise ValueError(f"frozen set is {preambles.N}x{preambles.K_p}, scenario wants {sc.N}x{sc.K_p}")
        frozen = preambles
    else:
        table = PreambleTable.init(sc.N, sc.K_p, rng)
    n_in = 2 * sc.K_p
    if variant != "preamble-based":
        uaen_spec = nn.NetworkSpec.mlp(2 * sc.K_d * sc.N_d, sc.N, "identity", hidden)
        uaen = nn.ParamStore.init(uaen_spec, rng)
        n_in += sc.N
    audn_spec = nn.NetworkSpec.mlp(n_in, sc.N, "sigmoid", hidden)
    audn = nn.ParamStore.init(audn_spec, rng)
    return AudSystem(variant, sc, cbs, audn_spec, audn, table, frozen, uaen_spec, uaen)


# ----------------------------------------------------------- forward passes

def audn_preamble_forward(spec: nn.NetworkSpec, params: nn.ParamStore, y_p) -> np.ndarray:
    return nn.forward(spec, params, nn.complex_to_real(y_p))[0]


def uaen_forward(spec: nn.NetworkSpec, params: nn.ParamStore, y_d) -> np.ndarray:
    """Per-user activity scores from the N_d superposed data blocks, ``y_d`` (..., N_d, K_d)."""
    y_d = np.asarray(y_d)
    if y_d.ndim == 2:
        y_d = y_d[None]
    return nn.forward(spec, params, nn.complex_to_real(y_d))[0]


def audn_data_aided_forward(spec: nn.NetworkSpec, params: nn.ParamStore, alpha, y_p) -> np.ndarray:
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    x = np.concatenate([alpha, nn.complex_to_real(y_p)], axis=1)
    return nn.forward(spec, params, x)[0]


def soft_output(system: AudSystem, frame: ReceivedFrame) -> np.ndarray:
    if system.data_aided:
        alpha = uaen_forward(system.uaen_spec, system.uaen, frame.y_d)
        return audn_data_aided_forward(system.audn_spec, system.audn, alpha, frame.y_p)
    return audn_preamble_forward(system.audn_spec, system.audn, frame.y_p)


def hard_decision(soft, threshold: float = THRESHOLD) -> np.ndarray:
    """Strict ``soft > threshold``; a tie goes to inactive."""
    return (np.asarray(soft) > threshold).astype(np.int8)


def detect(system: AudSystem, frame: ReceivedFrame, threshold: float = THRESHOLD) -> np.ndarray:
    out = hard_decision(soft_output(system, frame), threshold)
    return out[0] if np.ndim(frame.y_p) == 1 else out


# ------------------------------------------------------------------ training

@dataclass
class Gradients:
    audn: nn.ParamStore
    uaen: Optional[nn.ParamStore]
    table: Optional[np.ndarray]


def loss_and_gradients(system: AudSystem, delta, h, noise_p, y_d, aux_weight: float) -> tuple[float, Gradients]:
    """Training loss on one batch and its exact gradients.

    ``noise_p`` is the preamble noise realization, so the loss is a deterministic
    function of the parameters (used by the finite-difference checks).
    """
    delta = np.asarray(delta, dtype=np.float64)
    sc = system.scenario
    p = system.table.preambles() if system.trainable_preambles else system.frozen.p
    gain = delta * h
    y_p = gain @ p + noise_p
    x_p = nn.complex_to_real(y_p)

    alpha = cache_u = None
    if system.data_aided:
        x_d = nn.complex_to_real(y_d)
        alpha, cache_u = nn.forward(system.uaen_spec, system.uaen, x_d)
        x = np.concatenate([alpha, x_p], axis=1)
    else:
        x = x_p
    q, cache_a = nn.forward(system.audn_spec, system.audn, x)
    loss, g_q = nn.bce_loss(q, delta)

    g_audn, g_x = nn.backward(system.audn_spec, system.audn, cache_a, g_q)
    g_uaen = None
    if system.data_aided:
        g_alpha = g_x[:, :sc.N]
        if aux_weight > 0:
            s = nn.sigmoid(alpha)
            aux, g_s = nn.bce_loss(s, delta)
            loss += aux_weight * aux
            g_alpha = g_alpha + aux_weight * g_s * s * (1.0 - s)
        g_uaen, _ = nn.backward(system.uaen_spec, system.uaen, cache_u, g_alpha)
        g_x = g_x[:, sc.N:]

    g_table = None
    if system.trainable_preambles:
        K = sc.K_p
        g_y = g_x[:, :K] + 1j * g_x[:, K:]
        g_p = gain.conj().T @ g_y
        g_table = system.table.backward(g_p)
    return loss, Gradients(g_audn, g_uaen, g_table)


def training_streams(seed: int):
    return frame_streams(seed, 0x7A1)


def train(variant: str, scenario: ScenarioConfig, tc: TrainConfig, preambles: Optional[PreambleSet] = None,
          cbs: Optional[ScmaCodebookSet] = None) -> AudSystem:
    """Build and train one system on freshly sampled batches.

    Each batch draws its SNR uniformly from ``tc.snr_range``. Only the joint
    variants update the preamble table.
    """
    init_rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 0x1A17]))
    system = build_system(variant, scenario, init_rng, preambles, cbs, tc.hidden)
    system.train_config = tc
    streams = training_streams(tc.seed)
    noise_rng = streams.preamble_noise_rng()
    snr_rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 0x5A2]))

    opt_audn = nn.AdamState.for_params(system.audn, lr=tc.lr)
    opt_uaen = nn.AdamState.for_params(system.uaen, lr=tc.lr) if system.data_aided else None
    opt_table = nn.AdamState.for_arrays([system.table.raw], lr=tc.lr) if system.trainable_preambles else None

    for it in range(tc.iterations):
        snr = snr_rng.uniform(*tc.snr_range)
        batch = sample_batch(scenario, system.cbs, snr, tc.batch_size, streams)
        noise_p = complex_normal(noise_rng, (tc.batch_size, scenario.K_p), batch.sigma)
        loss, grads = loss_and_gradients(system, batch.delta, batch.h, noise_p, batch.y_d, tc.aux_weight)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at iteration {it}")
        system.loss_log.append(loss)
        nn.adam_step(system.audn, grads.audn, opt_audn)
        if opt_uaen is not None:
            nn.adam_step(system.uaen, grads.uaen, opt_uaen)
        if opt_table is not None:
            nn.adam_step([system.table.raw], [grads.table], opt_table)
        if tc.log_every and (it + 1) % tc.log_every == 0:
            recent = np.mean(system.loss_log[-tc.log_every:])
            log.info("%s iter %d loss %.4f", variant, it + 1, recent)
    return system


# ------------------------------------------------------------------ preambles

def extract_preambles(system: AudSystem) -> PreambleSet:
    if system.frozen is not None:
        return system.frozen
    sc = system.scenario
    return PreambleSet(system.table.preambles(), sc.assoc(), sc.J)


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % d for d in range(2, int(n ** 0.5) + 1))


def zadoff_chu(root: int, length: int) -> np.ndarray:
    """Odd-length Zadoff-Chu root sequence with unit energy."""
    k = np.arange(length)
    return np.exp(-1j * np.pi * root * k * (k + 1) / length) / np.sqrt(length)


def gen_independent_preambles(N: int, K_p: int, kind: str = "gaussian", seed: int = 0, J: int = 6,
                              association: str = "round-robin") -> PreambleSet:
    """Preamble sets designed without reference to the receiver.

    ``zadoff-chu-family`` enumerates cyclic shifts of root 1, then root 2, and so on,
    which needs a prime ``K_p`` and at most ``K_p * (K_p - 1)`` sequences.
    """
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        p = complex_normal(rng, (N, K_p))
    elif kind == "qpsk":
        p = np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=(N, K_p))))
    elif kind == "zadoff-chu-family":
        if not _is_prime(K_p):
            raise ValueError(f"zadoff-chu-family needs a prime K_p (got {K_p})")
        if N > K_p * (K_p - 1):
            raise ValueError(f"only {K_p * (K_p - 1)} root/shift pairs exist for K_p={K_p}")
        p = np.array([np.roll(zadoff_chu(1 + n // K_p, K_p), n % K_p) for n in range(N)])
    else:
        raise ValueError(f"unknown preamble kind {kind!r}")
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    return PreambleSet(p, association_map(N, J, association), J)


# ---------------------------------------------------------------- checkpoints

def save_system(system: AudSystem, directory) -> Path:
    """nn manifests + blobs for every sub-network, the scenario JSON and the preamble set."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nn.save_params(system.audn, system.audn_spec, directory, "audn")
    if system.data_aided:
        nn.save_params(system.uaen, system.uaen_spec, directory, "uaen")
    if system.trainable_preambles:
        nn.save_array(system.table.raw, directory, "preamble_table")
    system.preamble_set().save(directory / "preambles.json")
    system.cbs.save(directory / "codebooks.json")
    meta = {
        "variant": system.variant,
        "scenario": system.scenario.to_json(),
        "train": None if system.train_config is None else system.train_config.to_json(),
        "loss_log": [float(x) for x in system.loss_log],
    }
    (directory / "system.json").write_text(json.dumps(meta, indent=1))
    return directory


def load_system(directory) -> AudSystem:
    directory = Path(directory)
    meta = json.loads((directory / "system.json").read_text())
    scenario = ScenarioConfig.from_json(meta["scenario"])
    cbs = ScmaCodebookSet.load(directory / "codebooks.json")
    audn_spec, audn = nn.load_params(directory, "audn")
    uaen_spec = uaen = None
    if (directory / "uaen.json").exists():
        uaen_spec, uaen = nn.load_params(directory, "uaen")
    table = frozen = None
    if (directory / "preamble_table.json").exists():
        table = PreambleTable(nn.load_array(directory, "preamble_table"))
    else:
        frozen = PreambleSet.load(directory / "preambles.json")
    tc = None if meta["train"] is None else TrainConfig.from_json(meta["train"])
    return AudSystem(meta["variant"], scenario, cbs, audn_spec, audn, table, frozen, uaen_spec, uaen,
                     tc, list(meta["loss_log"]))
