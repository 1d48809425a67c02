"""SCMA mapping matrices, procedural codebook sets and the bit-block encoder."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CapacityError(ValueError):
    """More layers were requested than there are distinct N_m-subsets of K_d rows."""


@dataclass(frozen=True)
class MappingMatrix:
    """Binary K_d x J factor-graph matrix; column j marks the resources used by layer j."""

    entries: np.ndarray
    K_d: int
    J: int
    N_m: int

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.shape != (self.K_d, self.J):
            raise ValueError(f"entries shape {e.shape} != ({self.K_d}, {self.J})")
        if not np.isin(e, (0, 1)).all():
            raise ValueError("mapping entries must be 0 or 1")
        if not (e.sum(axis=0) == self.N_m).all():
            raise ValueError(f"every column must have exactly N_m={self.N_m} ones")
        e = e.astype(np.int8)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def overloading(self) -> float:
        return self.J / self.K_d

    def support(self, layer: int) -> np.ndarray:
        return np.flatnonzero(self.entries[:, layer])


def build_mapping_matrix(K_d: int, J: int, N_m: int) -> MappingMatrix:
    """First ``J`` lexicographic N_m-subsets of ``range(K_d)`` as binary columns."""
    if min(K_d, J, N_m) < 1:
        raise ValueError("K_d, J and N_m must be positive")
    if N_m >= K_d:
        raise ValueError(f"N_m={N_m} must be smaller than K_d={K_d}")
    capacity = math.comb(K_d, N_m)
    if J > capacity:
        raise CapacityError(f"J={J} exceeds C({K_d},{N_m})={capacity} distinct layer supports")
    entries = np.zeros((K_d, J), dtype=np.int8)
    for j, rows in enumerate(itertools.islice(itertools.combinations(range(K_d), N_m), J)):
        entries[list(rows), j] = 1
    return MappingMatrix(entries, K_d, J, N_m)


@dataclass(frozen=True)
class ScmaCodebookSet:
    """J codebooks of M unit-energy sparse codewords, ``codewords[j, m]`` of length K_d."""

    mapping: MappingMatrix
    M: int
    codewords: np.ndarray

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.complex128)
        expected = (self.mapping.J, self.M, self.mapping.K_d)
        if cw.shape != expected:
            raise ValueError(f"codewords shape {cw.shape} != {expected}")
        cw = cw.copy()
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def J(self) -> int:
        return self.mapping.J

    @property
    def K_d(self) -> int:
        return self.mapping.K_d

    @property
    def bits_per_block(self) -> int:
        return int(math.log2(self.M))

    def to_json(self) -> dict:
        cw = self.codewords
        return {
            "K_d": self.K_d,
            "J": self.J,
            "N_m": self.mapping.N_m,
            "M": self.M,
            "codewords": np.stack([cw.real, cw.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScmaCodebookSet":
        raw = np.asarray(doc["codewords"], dtype=np.float64)
        codewords = raw[..., 0] + 1j * raw[..., 1]
        support = (np.abs(codewords) > 0).any(axis=1).T.astype(np.int8)
        mapping = MappingMatrix(support, int(doc["K_d"]), int(doc["J"]), int(doc["N_m"]))
        return cls(mapping, int(doc["M"]), codewords)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "ScmaCodebookSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def mother_constellation(M: int, N_m: int) -> np.ndarray:
    """M x N_m complex points: M-PSK repeated on every dimension with a per-dimension phase offset.

    For M=4 each dimension is a QPSK symbol; rows are distinct because the first
    dimension alone is an M-PSK alphabet.
    """
    m = np.arange(M)[:, None]
    d = np.arange(N_m)[None, :]
    phase = 2 * np.pi * m / M + np.pi / 4 + d * np.pi / (2 * N_m)
    return np.exp(1j * phase) / np.sqrt(N_m)


def build_codebook_set(mapping: MappingMatrix, M: int) -> ScmaCodebookSet:
    if not _is_power_of_two(M) or M < 2:
        raise ValueError(f"M={M} must be a power of two >= 2")
    J, K_d = mapping.J, mapping.K_d
    mother = mother_constellation(M, mapping.N_m)
    codewords = np.zeros((J, M, K_d), dtype=np.complex128)
    for j in range(J):
        rotated = mother * np.exp(1j * j * np.pi / (2 * J))
        codewords[j][:, mapping.support(j)] = rotated
    codewords /= np.linalg.norm(codewords, axis=-1, keepdims=True)
    return ScmaCodebookSet(mapping, M, codewords)


def default_codebook_set(K_d: int = 4, J: int = 6, N_m: int = 2, M: int = 4) -> ScmaCodebookSet:
    return build_codebook_set(build_mapping_matrix(K_d, J, N_m), M)


def bits_to_index(bits) -> np.ndarray:
    """Big-endian integer value along the last axis."""
    bits = np.asarray(bits)
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1], dtype=np.int64)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def index_to_bits(index, n_bits: int) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((index[..., None] >> shifts) & 1).astype(np.int8)


def encode_block(cbs: ScmaCodebookSet, layer: int, block) -> np.ndarray:
    """Codeword of ``layer`` selected by the big-endian value of ``block``."""
    if not 0 <= layer < cbs.J:
        raise IndexError(f"layer {layer} out of range for J={cbs.J}")
    block = np.asarray(block)
    if block.shape != (cbs.bits_per_block,):
        raise ValueError(f"block must hold exactly {cbs.bits_per_block} bits, got shape {block.shape}")
    if not np.isin(block, (0, 1)).all():
        raise ValueError("block entries must be 0 or 1")
    return cbs.codewords[layer, int(bits_to_index(block))]
