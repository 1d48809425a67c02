"""Average, intra-codebook and inter-codebook preamble cross-correlation.

Preambles are re-indexed by codebook: ``p_l^(j)`` is the ``l``-th preamble (in
increasing original index) associated with codebook ``j``, and the report row
index is ``n = L*j + l``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .airlink import PreambleSet

UNDEFINED = "undefined"


def inner(a, b) -> complex:
    """Conjugated inner product sum_i a_i conj(b_i)."""
    return complex(np.vdot(b, a))


def pair_xcorr(p_a, p_b) -> float:
    p_a, p_b = np.asarray(p_a), np.asarray(p_b)
    if p_a.shape != p_b.shape:
        raise ValueError(f"length mismatch: {p_a.shape} vs {p_b.shape}")
    return abs(inner(p_a, p_b))


def by_codebook(ps: PreambleSet) -> np.ndarray:
    """``(J, L, K_p)`` array with ``[j, l]`` = l-th preamble of codebook j."""
    counts = np.bincount(ps.assoc, minlength=ps.J)
    if counts.min() != counts.max():
        raise ValueError(f"every codebook needs the same number of preambles, got counts {counts.tolist()}")
    L = int(counts[0])
    order = np.argsort(ps.assoc, kind="stable")
    return ps.p[order].reshape(ps.J, L, ps.K_p)


def xcorr_matrix(grouped: np.ndarray) -> np.ndarray:
    """``R[j, l, k, m] = |<p_l^(j), p_m^(k)>|``."""
    J, L, K = grouped.shape
    flat = grouped.reshape(J * L, K)
    return np.abs(flat @ flat.conj().T).reshape(J, L, J, L)


def _check_index(J: int, L: int, j: int, l: int) -> None:
    if not (0 <= j < J and 0 <= l < L):
        raise IndexError(f"(j={j}, l={l}) outside J={J}, L={L}")


def avg_xcorr(ps: PreambleSet, j: int, l: int) -> float:
    g = by_codebook(ps)
    J, L, _ = g.shape
    _check_index(J, L, j, l)
    N = J * L
    if N < 2:
        raise ValueError("average cross-correlation needs at least two preambles")
    row = np.abs(g.reshape(N, -1).conj() @ g[j, l])
    return float((row.sum() - row[L * j + l]) / (N - 1))


def intra_cb(ps: PreambleSet, j: int, l: int) -> float:
    g = by_codebook(ps)
    J, L, _ = g.shape
    _check_index(J, L, j, l)
    if L < 2:
        raise ValueError("intra-codebook correlation is undefined for L = 1")
    row = np.abs(g[j].conj() @ g[j, l])
    return float((row.sum() - row[l]) / (L - 1))


def inter_cb(ps: PreambleSet, j: int, l: int) -> float:
    g = by_codebook(ps)
    J, L, _ = g.shape
    _check_index(J, L, j, l)
    N = J * L
    if N == L:
        raise ValueError("inter-codebook correlation is undefined with a single codebook")
    full = np.abs(g.reshape(N, -1).conj() @ g[j, l]).sum()
    own = np.abs(g[j].conj() @ g[j, l]).sum()
    return float((full - own) / (N - L))


@dataclass
class XcorrReport:
    J: int
    L: int
    avg: np.ndarray      # (J, L)
    intra: np.ndarray    # (J, L)
    inter: np.ndarray    # (J, L)
    R_intra: float
    R_inter: float
    gamma: object        # float, math.inf, or UNDEFINED

    def rows(self):
        for j in range(self.J):
            for l in range(self.L):
                yield {"n": self.L * j + l, "j": j, "l": l, "avg_xcorr": float(self.avg[j, l]),
                       "intra": float(self.intra[j, l]), "inter": float(self.inter[j, l])}

    def to_csv(self, path=None, extra: dict | None = None) -> str:
        buf = io.StringIO()
        extra = extra or {}
        writer = csv.DictWriter(buf, fieldnames=[*extra, "n", "j", "l", "avg_xcorr", "intra", "inter"],
                                lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({**extra, **{k: repr(v) if isinstance(v, float) else v for k, v in row.items()}})
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        gamma = self.gamma
        if isinstance(gamma, float) and math.isinf(gamma):
            gamma = "inf"
        return {"R_intra": self.R_intra, "R_inter": self.R_inter, "gamma": gamma}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.summary(), indent=1)
        if path is not None:
            Path(path).write_text(text)
        return text


def gamma_ratio(R_intra: float, R_inter: float):
    """``R_intra / R_inter``; ``inf`` when only the denominator vanishes, ``UNDEFINED`` for 0/0."""
    if R_inter == 0.0:
        return UNDEFINED if R_intra == 0.0 else math.inf
    return R_intra / R_inter


def xcorr_report(ps: PreambleSet) -> XcorrReport:
    g = by_codebook(ps)
    J, L, _ = g.shape
    N = J * L
    if L < 2 or N == L:
        raise ValueError(f"heterogeneity needs L >= 2 and J >= 2 (got J={J}, L={L})")
    R = xcorr_matrix(g)
    self_terms = np.einsum("jljl->jl", R)
    full = R.sum(axis=(2, 3))
    own = np.einsum("jljm->jl", R)
    avg = (full - self_terms) / (N - 1)
    intra = (own - self_terms) / (L - 1)
    inter = (full - own) / (N - L)
    R_intra, R_inter = float(intra.mean()), float(inter.mean())
    return XcorrReport(J, L, avg, intra, inter, R_intra, R_inter, gamma_ratio(R_intra, R_inter))


def heterogeneity(ps: PreambleSet):
    return xcorr_report(ps).gamma
