"""Monte-Carlo ADER evaluation, SNR sweeps and experiment runs."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .airlink import (ConfigError, FrameBatch, PreambleSet, ScenarioConfig, frame_streams, sample_batch)
from .models import VARIANTS, AudSystem, TrainConfig, detect, gen_independent_preambles, load_system, save_system, train
from .scma_core import ScmaCodebookSet, build_codebook_set, build_mapping_matrix
from .xcorr import xcorr_report

log = logging.getLogger(__name__)

Z95 = 1.959963984540054
ADER_COLUMNS = ["variant", "n", "j_count", "l_count", "snr_db", "trials", "ader", "ci_half",
                "misses", "false_alarms", "seed"]


# ---------------------------------------------------------------- detectors

class GenieDetector:
    """Returns the true activity vector."""

    variant = "genie"

    def __call__(self, batch: FrameBatch) -> np.ndarray:
        return batch.delta.copy()


class ConstantDetector:
    """Declares every user inactive (``value=0``) or active (``value=1``)."""

    def __init__(self, value: int = 0):
        self.value = int(value)
        self.variant = "always-active" if self.value else "always-inactive"

    def __call__(self, batch: FrameBatch) -> np.ndarray:
        return np.full_like(batch.delta, self.value)


Detector = Union[AudSystem, Callable[[FrameBatch], np.ndarray]]


def variant_name(system: Detector) -> str:
    return getattr(system, "variant", type(system).__name__)


def _detect_batch(system: Detector, batch: FrameBatch) -> np.ndarray:
    if isinstance(system, AudSystem):
        return detect(system, batch.frame(system.preamble_set()))
    return np.asarray(system(batch))


# -------------------------------------------------------------------- ADER

@dataclass
class AderPoint:
    snr_db: float
    ader: float
    ci_half: float
    trials: int
    misses: int
    false_alarms: int

    @property
    def errors(self) -> int:
        return self.misses + self.false_alarms


def wilson_half_width(errors: int, n: int, z: float = Z95) -> float:
    """Half-width of the Wilson score interval for ``errors`` out of ``n``."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = errors / n
    denom = 1.0 + z * z / n
    return z / denom * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))


def _codebooks_for(system: Detector, scenario: ScenarioConfig) -> ScmaCodebookSet:
    if isinstance(system, AudSystem):
        return system.cbs
    return build_codebook_set(build_mapping_matrix(scenario.K_d, scenario.J, scenario.N_m), scenario.M)


def _check_compatible(system: Detector, scenario: ScenarioConfig) -> None:
    if not isinstance(system, AudSystem):
        return
    s = system.scenario
    for name in ("N", "J", "L", "K_p", "K_d", "N_d", "M"):
        if getattr(s, name) != getattr(scenario, name):
            raise ValueError(f"system trained with {name}={getattr(s, name)}, scenario has {getattr(scenario, name)}")


def eval_ader(system: Detector, scenario: ScenarioConfig, snr_db: float, trials: int, seed: int,
              batch_size: int = 4096) -> AderPoint:
    """Per-user activity error rate over ``trials`` frames.

    Frames come from streams keyed by ``(seed, batch index)``, so two detectors
    evaluated with the same seed see identical activity, channels, data and noise.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    _check_compatible(system, scenario)
    cbs = _codebooks_for(system, scenario)
    misses = false_alarms = 0
    done, b = 0, 0
    while done < trials:
        size = min(batch_size, trials - done)
        batch = sample_batch(scenario, cbs, snr_db, size, frame_streams(seed, b))
        est = _detect_batch(system, batch)
        if est.shape != batch.delta.shape:
            raise ValueError(f"detector returned shape {est.shape}, expected {batch.delta.shape}")
        misses += int(np.sum((batch.delta == 1) & (est == 0)))
        false_alarms += int(np.sum((batch.delta == 0) & (est == 1)))
        done += size
        b += 1
    n = trials * scenario.N
    errors = misses + false_alarms
    return AderPoint(float(snr_db), errors / n, wilson_half_width(errors, n), trials, misses, false_alarms)


def point_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0xADE, int(k)]).generate_state(1)[0])


def snr_sweep(systems: Sequence[Detector], scenario: ScenarioConfig, grid: Sequence[float], trials: int,
              seed: int, path=None, batch_size: int = 4096) -> list[dict]:
    """Evaluate every system at every grid point with shared per-point seeds.

    A failing (system, point) pair yields a row with ``ader = nan`` and the error
    text in ``status``; the sweep carries on.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("SNR grid must not be empty")
    rows = []
    for system in systems:
        name = variant_name(system)
        for k, snr in enumerate(grid):
            s = point_seed(seed, k)
            row = {"variant": name, "n": scenario.N, "j_count": scenario.J, "l_count": scenario.L,
                   "snr_db": float(snr), "trials": trials, "seed": s}
            try:
                pt = eval_ader(system, scenario, snr, trials, s, batch_size)
                row.update(ader=pt.ader, ci_half=pt.ci_half, misses=pt.misses,
                           false_alarms=pt.false_alarms, status="ok")
            except Exception as exc:  # noqa: BLE001 - the sweep must survive one bad point
                log.warning("sweep point %s @ %s dB failed: %s", name, snr, exc)
                row.update(ader=float("nan"), ci_half=float("nan"), misses=-1, false_alarms=-1,
                           status=f"error: {exc}")
            rows.append(row)
    if path is not None:
        write_ader_csv(rows, path)
    return rows


def write_ader_csv(rows: Sequence[dict], path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ADER_COLUMNS + ["status"], lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_ader_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in ("snr_db", "ader", "ci_half"):
            row[k] = float(row[k])
        for k in ("n", "j_count", "l_count", "trials", "misses", "false_alarms", "seed"):
            row[k] = int(row[k])
    return rows


# ------------------------------------------------------------- experiments

@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    variants: list
    snr_grid: list
    trials: int
    seed: int
    output: str
    train: TrainConfig = field(default_factory=TrainConfig)
    independent_preambles: Union[str, dict] = "preamble-based"
    baselines: list = field(default_factory=list)

    @classmethod
    def from_json(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        """Validate everything first and report every violated field at once."""
        problems = []
        scenario = tc = None
        try:
            scenario = ScenarioConfig.from_json(doc.get("scenario", {}))
        except ConfigError as exc:
            problems += [f"scenario: {p}" for p in exc.problems]
        except TypeError as exc:
            problems.append(f"scenario: {exc}")
        try:
            tc = TrainConfig.from_json(doc.get("train", {}))
        except (ValueError, TypeError) as exc:
            problems.append(f"train: {exc}")
        variants = list(doc.get("variants", list(VARIANTS)))
        bad = [v for v in variants if v not in VARIANTS]
        if bad:
            problems.append(f"variants: unknown {bad}; choose from {list(VARIANTS)}")
        grid = doc.get("snr_grid")
        if not grid:
            problems.append("snr_grid: must be a nonempty list")
        trials = doc.get("trials", 0)
        if not isinstance(trials, int) or trials < 1:
            problems.append("trials: must be an integer >= 1")
        baselines = list(doc.get("baselines", []))
        bad = [b for b in baselines if b not in BASELINES]
        if bad:
            problems.append(f"baselines: unknown {bad}; choose from {sorted(BASELINES)}")
        indep = doc.get("independent_preambles", "preamble-based")
        if "data-aided-independent" in variants:
            if indep == "preamble-based":
                if "preamble-based" not in variants:
                    problems.append("independent_preambles: 'preamble-based' needs that variant in the run")
            elif isinstance(indep, dict):
                if indep.get("kind") not in ("gaussian", "qpsk", "zadoff-chu-family"):
                    problems.append("independent_preambles: kind must be gaussian, qpsk or zadoff-chu-family")
            elif isinstance(indep, str):
                if base_dir is not None and not Path(indep).is_absolute():
                    indep = str(Path(base_dir) / indep)
                if not Path(indep).exists():
                    problems.append(f"independent_preambles: file {indep} not found")
        if problems:
            raise ConfigError(problems)
        output = doc.get("output", "runs/experiment")
        if base_dir is not None and not Path(output).is_absolute():
            output = str(Path(base_dir) / output)
        return cls(scenario, variants, [float(s) for s in grid], trials, int(doc.get("seed", 0)), output,
                   tc, indep, baselines)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), base_dir=path.parent)

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario.to_json(),
            "variants": list(self.variants),
            "snr_grid": list(self.snr_grid),
            "trials": self.trials,
            "seed": self.seed,
            "output": self.output,
            "train": self.train.to_json(),
            "independent_preambles": self.independent_preambles,
            "baselines": list(self.baselines),
        }


BASELINES = {
    "genie": GenieDetector,
    "always-inactive": lambda: ConstantDetector(0),
    "always-active": lambda: ConstantDetector(1),
}


def _independent_set(cfg: ExperimentConfig, trained: dict) -> PreambleSet:
    src = cfg.independent_preambles
    sc = cfg.scenario
    if src == "preamble-based":
        ps = trained["preamble-based"].preamble_set()
        return PreambleSet(ps.p.copy(), ps.assoc.copy(), ps.J)
    if isinstance(src, dict):
        return gen_independent_preambles(sc.N, sc.K_p, src["kind"], int(src.get("seed", cfg.seed)), sc.J,
                                         sc.association)
    return PreambleSet.load(src)


def train_variants(cfg: ExperimentConfig, checkpoint_dir=None, reuse: bool = False) -> dict:
    """Train (or reload) every requested variant; the independent one is trained last."""
    systems = {}
    order = sorted(cfg.variants, key=lambda v: v == "data-aided-independent")
    for variant in order:
        ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / variant
        if reuse and ckpt is not None and (ckpt / "system.json").exists():
            systems[variant] = load_system(ckpt)
            continue
        frozen = _independent_set(cfg, systems) if variant == "data-aided-independent" else None
        log.info("training %s", variant)
        systems[variant] = train(variant, cfg.scenario, cfg.train, preambles=frozen)
        if ckpt is not None:
            save_system(systems[variant], ckpt)
    return {v: systems[v] for v in cfg.variants}


def write_xcorr_csv(systems: dict, path=None) -> str:
    parts = []
    for i, (name, system) in enumerate(systems.items()):
        text = xcorr_report(system.preamble_set()).to_csv(extra={"variant": name})
        parts.append(text if i == 0 else text.split("\n", 1)[1])
    text = "".join(parts)
    if path is not None:
        Path(path).write_text(text)
    return text


def run_experiment(config, reuse: bool = False) -> Path:
    """Train, sweep and write ader.csv, xcorr.csv, summary.json, checkpoints/ and manifest.json."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.load(config)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    systems = train_variants(cfg, out / "checkpoints", reuse)

    detectors = list(systems.values()) + [BASELINES[b]() for b in cfg.baselines]
    rows = snr_sweep(detectors, cfg.scenario, cfg.snr_grid, cfg.trials, cfg.seed, out / "ader.csv")
    write_xcorr_csv(systems, out / "xcorr.csv")

    summary = {"variants": {}, "ader": rows}
    for name, system in systems.items():
        rep = xcorr_report(system.preamble_set())
        summary["variants"][name] = {
            **rep.summary(),
            "final_loss": float(np.mean(system.loss_log[-100:])) if system.loss_log else None,
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=str))
    manifest = {
        "config": cfg.to_json(),
        "seeds": {"master": cfg.seed, "train": cfg.train.seed,
                  "points": [point_seed(cfg.seed, k) for k in range(len(cfg.snr_grid))]},
        "versions": {"gfscma": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out


def format_report(directory) -> str:
    """Plain-text table of an experiment directory's ADER rows and heterogeneity summary."""
    directory = Path(directory)
    lines = []
    rows = read_ader_csv(directory / "ader.csv")
    lines.append(f"{'variant':<24}{'snr_db':>8}{'ader':>12}{'+/-':>10}{'misses':>8}{'FA':>8}")
    for r in rows:
        lines.append(f"{r['variant']:<24}{r['snr_db']:>8.1f}{r['ader']:>12.5f}{r['ci_half']:>10.5f}"
                     f"{r['misses']:>8d}{r['false_alarms']:>8d}")
    summary_path = directory / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())
        lines.append("")
        lines.append(f"{'variant':<24}{'R_intra':>10}{'R_inter':>10}{'gamma':>10}")
        for name, s in summary["variants"].items():
            g = s["gamma"]
            g = f"{g:.4f}" if isinstance(g, float) else str(g)
            lines.append(f"{name:<24}{s['R_intra']:>10.4f}{s['R_inter']:>10.4f}{g:>10}")
    return "\n".join(lines)
