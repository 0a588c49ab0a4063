"""X-basis fringe scans: repeated simulated runs over a grid of signal AMZI phases."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import DEFAULT_WINDOW_PS, FringeFit, fit_sinusoid, window_count
from .core import Port
from .sim import AnalyticRates, ExperimentConfig, simulate

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PlcPhaseMap:
    """Linear map between PLC temperature offset and long-arm phase."""

    theta0: float = 0.0
    dtheta_dt: float = TWO_PI  # rad per degC

    def phase(self, delta_t_c):
        return self.theta0 + self.dtheta_dt * np.asarray(delta_t_c)

    def temperature(self, theta):
        return (np.asarray(theta) - self.theta0) / self.dtheta_dt


@dataclass(frozen=True)
class FringePoint:
    theta1: float
    correlated: tuple[int, ...]  # per-repetition counts of the correlated pair
    anticorrelated: tuple[int, ...]

    @property
    def corr_mean(self) -> float:
        return float(np.mean(self.correlated))

    @property
    def anti_mean(self) -> float:
        return float(np.mean(self.anticorrelated))

    @property
    def corr_std(self) -> float:
        return float(np.std(self.correlated, ddof=1)) if len(self.correlated) > 1 else 0.0

    @property
    def anti_std(self) -> float:
        return float(np.std(self.anticorrelated, ddof=1)) if len(self.anticorrelated) > 1 else 0.0


def point_seed(base_seed: int, point: int, rep: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(0xF1, point, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def fringe_scan(config: ExperimentConfig, theta_values: Sequence[float], repetitions: int = 3,
                window_ps: float = DEFAULT_WINDOW_PS,
                correlated: tuple[Port, Port] = (Port.X0, Port.X0),
                anticorrelated: tuple[Port, Port] = (Port.X0, Port.X1),
                workers: int = 1) -> list[FringePoint]:
    """One simulated run of ``config.duration_s`` per (phase, repetition).

    Counts slot-aligned coincidences (window centred on zero delay) for a
    correlated and an anticorrelated signal/idler port pairing.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    a = config.channel_id(correlated[0])
    b = config.channel_id(correlated[1], idler=True)
    a2 = config.channel_id(anticorrelated[0])
    b2 = config.channel_id(anticorrelated[1], idler=True)
    wanted = sorted({a, b, a2, b2})
    points = []
    for j, theta in enumerate(theta_values):
        corr, anti = [], []
        for r in range(repetitions):
            cfg = replace(config.with_phases(theta1=float(theta)), seed=point_seed(config.seed, j, r))
            tags = simulate(cfg, channels=wanted, workers=workers)
            corr.append(window_count(tags.times(a), tags.times(b), window_ps))
            anti.append(window_count(tags.times(a2), tags.times(b2), window_ps))
        points.append(FringePoint(float(theta), tuple(corr), tuple(anti)))
    return points


def fit_scan(points: Sequence[FringePoint], **kw) -> tuple[FringeFit, FringeFit]:
    """Fit both traces of a scan; returns (correlated, anticorrelated)."""
    x = [p.theta1 for p in points]
    fc = fit_sinusoid(x, [p.corr_mean for p in points], _std(points, "corr"), **kw)
    fa = fit_sinusoid(x, [p.anti_mean for p in points], _std(points, "anti"), **kw)
    return fc, fa


def _std(points, which):
    # standard error of the per-point mean; Poisson floor guards against
    # repetitions that agree by chance at low counts
    out = []
    for p in points:
        n = len(p.correlated)
        mean, s = (p.corr_mean, p.corr_std) if which == "corr" else (p.anti_mean, p.anti_std)
        out.append(max(s, math.sqrt(max(mean, 1.0))) / math.sqrt(n))
    return out


@dataclass(frozen=True)
class FringePrediction:
    mean_counts: float
    visibility: float
    phase0: float


def expected_fringe(config: ExperimentConfig, signal_port: Port, idler_port: Port,
                    window_ps: float = DEFAULT_WINDOW_PS) -> FringePrediction:
    """Analytic counts-vs-theta1 fringe for one port pairing over ``config.duration_s``.

    Phase-averaged true rate and accidentals come from the analytic rate
    model; the modulation depth is the two-photon coherence.
    """
    a = config.channel_id(signal_port)
    b = config.channel_id(idler_port, idler=True)
    # at a quarter-fringe phase every rate equals its phase average
    quarter = config.with_phases(theta1=math.pi / 2.0 - config.phases.theta2 - config.phases.delta_pump)
    rates = AnalyticRates.from_config(quarter)
    true = rates.windowed_true_rate(a, b, window_ps)
    acc = rates.accidental_rate(a, b, window_ps)
    # only the equal-slot component interferes
    equal = rates.true_rate(a, b, 0) * rates.peak_fraction(a, b, window_ps, 0)
    vis = config.two_photon_coherence * equal / (true + acc) if true + acc > 0 else 0.0
    sign = 1.0 if (signal_port is Port.X0) == (idler_port is Port.X0) else -1.0
    phase0 = config.phases.theta2 + config.phases.delta_pump + (0.0 if sign > 0 else math.pi)
    return FringePrediction((true + acc) * config.duration_s, vis, math.remainder(phase0, TWO_PI))


FRINGE_COLUMNS = ["theta1_rad", "plc_dt_c", "x0x0_mean", "x0x0_std", "x0x1_mean", "x0x1_std",
                  "repetitions", "x0x0_counts", "x0x1_counts"]


def write_fringe_csv(path, points: Sequence[FringePoint], phase_map: PlcPhaseMap = PlcPhaseMap()) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FRINGE_COLUMNS)
        for p in points:
            w.writerow([repr(p.theta1), repr(float(phase_map.temperature(p.theta1))),
                        repr(p.corr_mean), repr(p.corr_std), repr(p.anti_mean), repr(p.anti_std),
                        len(p.correlated), " ".join(map(str, p.correlated)),
                        " ".join(map(str, p.anticorrelated))])
    return path


def read_fringe_csv(path) -> list[FringePoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = {"theta1_rad", "x0x0_counts", "x0x1_counts"} - set(rows[0] if rows else {})
    if missing:
        from .errors import SchemaError
        raise SchemaError(f"missing columns {sorted(missing)}", str(path))
    return [FringePoint(float(r["theta1_rad"]),
                        tuple(int(v) for v in r["x0x0_counts"].split()),
                        tuple(int(v) for v in r["x0x1_counts"].split())) for r in rows]
