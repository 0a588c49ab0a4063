"""Monte Carlo generator of time-tagged detection events.

Pairs are emitted as a Poisson process.  Each pair draws a joint
``(port, slot | port, slot)`` outcome from the stationary two-photon table,
and each photon survives its channel with probability ``10^(-loss/10)``.
Poisson thinning is exact, so the generator samples the three detectable
classes (both photons, signal only, idler only) directly as independent
Poisson processes and never materialises lost pairs.

Time is partitioned into fixed chunks.  Chunk ``j`` draws pair events from
``SeedSequence(seed, spawn_key=(j, 0))`` and the dark counts of channel
position ``c`` from ``spawn_key=(j, 1, c)``, so chunks are independent and may
run concurrently, and changing a dark rate leaves the pair events untouched.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

from . import core
from .core import PORTS, PhaseConfig, Port
from .errors import ConfigError, RangeError
from .ring import (RingSpec, SourceSpec, cavity_photon_lifetime, filter_comb_offset,
                   pair_generation_rate)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
PS_PER_S = 10**12

# Combined with the 16.5 ps biphoton skew this gives a ~140 ps coincidence peak.
DEFAULT_JITTER_FWHM_PS = 92.0
DEFAULT_DARK_RATE_HZ = 100.0
SIGNAL_LOSS_DB = 28.0
IDLER_LOSS_DB = 29.0

# channel positions 0..3 are signal Z0, X0, X1, Z1; 4..7 the idler ports
SIGNAL_POSITIONS = {p: i for i, p in enumerate(PORTS)}
IDLER_POSITIONS = {p: i + 4 for i, p in enumerate(PORTS)}
POSITION_LABELS = [p.label() for p in PORTS] + [p.label(idler=True) for p in PORTS]


@dataclass(frozen=True)
class ChannelSpec:
    channel_id: int
    transmittance_db: float
    jitter_fwhm_ps: float = DEFAULT_JITTER_FWHM_PS
    dark_rate_hz: float = DEFAULT_DARK_RATE_HZ
    delay_offset_ps: float = 0.0
    dead_time_ps: float = 0.0

    def __post_init__(self):
        key = f"channels.{self.channel_id}"
        if not 0 <= self.channel_id < 2**16:
            raise RangeError("channel id must fit in 16 bits", key)
        if self.transmittance_db < 0:
            raise RangeError("loss must be entered as a positive dB value", key + ".transmittance_db")
        if self.jitter_fwhm_ps < 0:
            raise RangeError("jitter must be >= 0", key + ".jitter_fwhm_ps")
        if self.dark_rate_hz < 0:
            raise RangeError("dark rate must be >= 0", key + ".dark_rate_hz")
        if self.dead_time_ps < 0:
            raise RangeError("dead time must be >= 0", key + ".dead_time_ps")

    @property
    def jitter_sigma_ps(self) -> float:
        return self.jitter_fwhm_ps / FWHM_PER_SIGMA


def default_channels() -> tuple[ChannelSpec, ...]:
    return tuple(ChannelSpec(i, SIGNAL_LOSS_DB if i < 4 else IDLER_LOSS_DB) for i in range(8))


@dataclass(frozen=True)
class ExperimentConfig:
    ring: RingSpec = field(default_factory=RingSpec)
    source: SourceSpec = field(default_factory=SourceSpec)
    phases: PhaseConfig = field(default_factory=PhaseConfig)
    ring_temperature_c: float = 25.0
    amzi_delay_ps: float = 800.0
    # PLC loss on top of the 4-way fan-out already in the amplitude engine
    amzi_insertion_db: float = 1.5
    # fraction of pairs whose short-short and long-long histories stay indistinguishable
    two_photon_coherence: float = 0.96
    channels: tuple[ChannelSpec, ...] = field(default_factory=default_channels)
    duration_s: float = 1.0
    seed: int = 0
    chunk_s: float = 1.0
    mode: str = "amzi"
    signal_filter_nm: float | None = None
    idler_filter_nm: float | None = None
    filter_bandwidth_nm: float = 2.0

    def validate(self) -> "ExperimentConfig":
        if len(self.channels) != 8:
            raise ConfigError(f"expected 8 channels, got {len(self.channels)}", "channels")
        ids = [c.channel_id for c in self.channels]
        if len(set(ids)) != 8:
            raise ConfigError("channel ids must be distinct", "channels")
        if not -50.0 <= self.ring_temperature_c <= 150.0:
            raise RangeError("temperature outside -50..150 C", "ring.temperature_c")
        if not self.amzi_delay_ps > 0:
            raise RangeError("AMZI delay must be > 0", "phases.amzi_delay_ps")
        if self.amzi_insertion_db < 0:
            raise RangeError("insertion loss must be >= 0", "phases.amzi_insertion_db")
        if not 0.0 <= self.two_photon_coherence <= 1.0:
            raise RangeError("coherence must lie in [0, 1]", "phases.two_photon_coherence")
        if not self.duration_s > 0:
            raise RangeError("duration must be > 0", "run.duration_s")
        if not self.chunk_s > 0:
            raise RangeError("chunk length must be > 0", "run.chunk_s")
        if not 0 <= self.seed < 2**64:
            raise RangeError("seed must be an unsigned 64-bit integer", "run.seed")
        if self.mode not in ("amzi", "direct"):
            raise RangeError("mode must be 'amzi' or 'direct'", "run.mode")
        return self

    @property
    def channel_ids(self) -> list[int]:
        return [c.channel_id for c in self.channels]

    def channel_id(self, port: Port, idler: bool = False) -> int:
        pos = (IDLER_POSITIONS if idler else SIGNAL_POSITIONS)[port]
        return self.channels[pos].channel_id

    @property
    def pair_correlation_ps(self) -> float:
        if self.source.pair_correlation_time_ps is not None:
            return self.source.pair_correlation_time_ps
        return cavity_photon_lifetime(self.ring, self.source.pump_wavelength_nm)

    def pair_rate_hz(self) -> float:
        """Pair rate reaching the detection channels (zero if the filters miss the comb)."""
        if self.signal_filter_nm is not None and self.idler_filter_nm is not None:
            k = filter_comb_offset(self.ring, self.ring_temperature_c, self.signal_filter_nm,
                                   self.idler_filter_nm, self.filter_bandwidth_nm)
            if k is None:
                return 0.0
        return pair_generation_rate(self.source)

    def with_phases(self, **kw) -> "ExperimentConfig":
        return replace(self, phases=replace(self.phases, **kw))


class TimeTag(NamedTuple):
    channel: int
    time: int  # ps


@dataclass
class RunSummary:
    seed: int
    mode: str
    duration_s: float
    pair_rate_hz: float
    counts: dict[int, int]
    dark_counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class TagStream:
    """Merged, time-sorted detection record."""

    channel: np.ndarray  # uint16
    time: np.ndarray  # int64 ps
    duration_ps: int
    summary: RunSummary | None = None
    truth: dict[str, np.ndarray] | None = None

    def __len__(self):
        return len(self.time)

    def __iter__(self):
        for c, t in zip(self.channel.tolist(), self.time.tolist()):
            yield TimeTag(c, t)

    @property
    def duration_s(self) -> float:
        return self.duration_ps / PS_PER_S

    def times(self, channel_id: int) -> np.ndarray:
        return self.time[self.channel == channel_id]

    def channels_present(self) -> set[int]:
        return set(np.unique(self.channel).tolist())


@dataclass(frozen=True)
class _Plan:
    """Precomputed per-outcome arrays shared by all chunks."""

    rate_hz: float
    sig_pos: np.ndarray
    idl_pos: np.ndarray
    sig_slot: np.ndarray
    idl_slot: np.ndarray
    # per detection class: outcome weights, nonzero support with its
    # normalised probabilities, and the total class rate
    weights: tuple[np.ndarray, np.ndarray, np.ndarray]
    supports: tuple[np.ndarray, np.ndarray, np.ndarray]
    probs: tuple[np.ndarray, np.ndarray, np.ndarray]
    class_rates: tuple[float, float, float]
    ids: np.ndarray
    sigma: np.ndarray
    offset: np.ndarray
    dark: np.ndarray
    dead: np.ndarray
    skew_ps: float
    tau_ps: float


def outcome_table(config: ExperimentConfig) -> tuple[list, np.ndarray]:
    """Outcome keys and probabilities for the configured coherence mixture."""
    coh = core.cw_table(config.phases, coherent=True)
    c = config.two_photon_coherence
    if c < 1.0:
        inc = core.cw_table(config.phases, coherent=False)
        keys = sorted(set(coh.probabilities) | set(inc.probabilities), key=_key_order)
        probs = np.array([c * coh[k] + (1.0 - c) * inc[k] for k in keys])
    else:
        keys = sorted(coh.probabilities, key=_key_order)
        probs = np.array([coh[k] for k in keys])
    return keys, probs


def _key_order(key):
    ps, ss, pi, si = key
    return (PORTS.index(ps), ss, PORTS.index(pi), si)


def _plan(config: ExperimentConfig, mask: set[int] | None) -> _Plan:
    ch = config.channels
    loss = np.array([c.transmittance_db for c in ch], dtype=float)
    ids = np.array([c.channel_id for c in ch], dtype=np.uint16)
    enabled = np.array([mask is None or c.channel_id in mask for c in ch], dtype=float)
    if config.mode == "direct":
        sig_pos, idl_pos = np.array([0]), np.array([4])
        sig_slot = idl_slot = np.array([0])
        probs = np.array([1.0])
        eta = 10.0 ** (-loss / 10.0)
    else:
        keys, probs = outcome_table(config)
        sig_pos = np.array([SIGNAL_POSITIONS[k[0]] for k in keys])
        sig_slot = np.array([k[1] for k in keys])
        idl_pos = np.array([IDLER_POSITIONS[k[2]] for k in keys])
        idl_slot = np.array([k[3] for k in keys])
        eta = 10.0 ** (-(loss + config.amzi_insertion_db) / 10.0)
    eta = eta * enabled
    es, ei = eta[sig_pos], eta[idl_pos]
    weights = (probs * es * ei, probs * es * (1.0 - ei), probs * (1.0 - es) * ei)
    rate = config.pair_rate_hz()
    supports = tuple(np.flatnonzero(w > 0) for w in weights)
    probs = tuple(w[sup] / w[sup].sum() if len(sup) else w[sup] for w, sup in zip(weights, supports))
    class_rates = tuple(rate * float(w.sum()) for w in weights)
    return _Plan(
        rate_hz=rate, sig_pos=sig_pos, idl_pos=idl_pos, sig_slot=sig_slot, idl_slot=idl_slot,
        weights=weights, supports=supports, probs=probs, class_rates=class_rates, ids=ids,
        sigma=np.array([c.jitter_sigma_ps for c in ch]),
        offset=np.array([c.delay_offset_ps for c in ch]),
        dark=np.array([c.dark_rate_hz for c in ch]) * enabled,
        dead=np.array([c.dead_time_ps for c in ch]),
        skew_ps=config.pair_correlation_ps,
        tau_ps=0.0 if config.mode == "direct" else config.amzi_delay_ps,
    )


def _chunk(plan: _Plan, seed: int, index: int, t0: int, t1: int, truth: bool):
    dt = t1 - t0
    dt_s = dt / PS_PER_S
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, 0)))
    pos_parts, time_parts, em_parts, slot_parts = [], [], [], []

    def emit(pos, t, t_em, slot):
        pos_parts.append(pos)
        time_parts.append(t)
        if truth:
            em_parts.append(t_em)
            slot_parts.append(slot)

    for cls, (sup, probs, class_rate) in enumerate(zip(plan.supports, plan.probs, plan.class_rates)):
        if class_rate <= 0:
            continue
        n = rng.poisson(class_rate * dt_s)
        # emission times are iid, so outcomes can be laid out in blocks
        k = np.repeat(sup, rng.multinomial(n, probs))
        t_em = t0 + rng.random(n) * dt
        if cls in (0, 1):
            pos = plan.sig_pos[k]
            t = (t_em + plan.sig_slot[k] * plan.tau_ps + plan.offset[pos]
                 + rng.standard_normal(n) * plan.sigma[pos])
            emit(pos, t, t_em, plan.sig_slot[k])
        if cls in (0, 2):
            pos = plan.idl_pos[k]
            t = (t_em + plan.idl_slot[k] * plan.tau_ps + rng.laplace(0.0, plan.skew_ps, n)
                 + plan.offset[pos] + rng.standard_normal(n) * plan.sigma[pos])
            emit(pos, t, t_em, plan.idl_slot[k])

    n_dark = np.zeros(len(plan.ids), dtype=np.int64)
    for p, rate in enumerate(plan.dark):
        if rate <= 0:
            continue
        drng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, 1, p)))
        n = drng.poisson(rate * dt_s)
        n_dark[p] = n
        t = t0 + drng.random(n) * dt
        emit(np.full(n, p), t, np.full(n, np.nan), np.full(n, -1))

    pos = np.concatenate(pos_parts) if pos_parts else np.zeros(0, dtype=np.int64)
    t = np.floor(np.concatenate(time_parts)).astype(np.int64) if time_parts else np.zeros(0, np.int64)
    # sorted chunks make the global merge sort nearly linear
    order = np.argsort(t * 8 + pos)
    pos, t = pos[order], t[order]
    extra = None
    if truth:
        extra = (np.concatenate(em_parts)[order], np.concatenate(slot_parts)[order])
    return pos, t, n_dark, extra


def _apply_dead_time(chan: np.ndarray, time: np.ndarray, dead: dict[int, float]) -> np.ndarray:
    """Keep-mask for a non-paralysable dead time per channel."""
    keep = np.ones(len(time), dtype=bool)
    for cid, d in dead.items():
        if d <= 0:
            continue
        idx = np.flatnonzero(chan == cid)
        if len(idx) < 2 or np.all(np.diff(time[idx]) >= d):
            continue
        last = None
        for j in idx.tolist():
            if last is not None and time[j] - last < d:
                keep[j] = False
            else:
                last = time[j]
    return keep


def simulate(config: ExperimentConfig, channels: Sequence[int] | None = None,
             workers: int = 1, truth: bool = False) -> TagStream:
    """Generate the merged detection stream for ``config``.

    ``channels`` restricts generation to a subset of channel ids; the
    retained streams have the same distribution as a full run filtered
    afterwards.  ``truth=True`` attaches per-tag emission times and slots
    (NaN / -1 for dark counts) for testing.
    """
    config.validate()
    mask = None if channels is None else set(int(c) for c in channels)
    plan = _plan(config, mask)
    total_ps = int(round(config.duration_s * PS_PER_S))
    chunk_ps = max(1, int(round(config.chunk_s * PS_PER_S)))
    starts = list(range(0, total_ps, chunk_ps))
    jobs = [(i, s, min(s + chunk_ps, total_ps)) for i, s in enumerate(starts)]

    def run(job):
        return _chunk(plan, config.seed, *job, truth)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    pos = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, int)
    time = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    n_dark = sum((p[2] for p in parts), np.zeros(len(plan.ids), dtype=np.int64))
    inside = np.flatnonzero((time >= 0) & (time < total_ps))
    # one int64 key orders by time, then channel position (< 8)
    key = time[inside] * 8 + pos[inside]
    order = inside[np.argsort(key, kind="stable")]
    chan = plan.ids[pos[order]]
    time = time[order]

    extra = None
    if truth:
        em = np.concatenate([p[3][0] for p in parts])[order]
        slot = np.concatenate([p[3][1] for p in parts])[order]
        extra = {"emission_ps": em, "slot": slot}

    dead = {int(i): float(d) for i, d in zip(plan.ids, plan.dead)}
    if any(d > 0 for d in dead.values()):
        keep = _apply_dead_time(chan, time, dead)
        chan, time = chan[keep], time[keep]
        if extra:
            extra = {k: v[keep] for k, v in extra.items()}

    ids, counts = np.unique(chan, return_counts=True)
    count_map = {int(i): 0 for i in plan.ids}
    count_map.update({int(i): int(n) for i, n in zip(ids, counts)})
    summary = RunSummary(
        seed=config.seed, mode=config.mode, duration_s=config.duration_s,
        pair_rate_hz=plan.rate_hz, counts=count_map,
        dark_counts={int(i): int(n) for i, n in zip(plan.ids, n_dark)},
    )
    return TagStream(chan.astype(np.uint16), time, total_ps, summary, extra)


def simulate_direct(config: ExperimentConfig, **kw) -> TagStream:
    """Pairs routed straight to the signal Z0 and idler Z'0 channels, no AMZI."""
    return simulate(replace(config, mode="direct"), **kw)


# ---------------------------------------------------------------- analytic oracle

def window_fraction(window_ps: float, sigma_ps: float, skew_ps: float, mean_ps: float = 0.0) -> float:
    """P(|X - mean| < window/2) for X = mean + Laplace(skew) + Normal(sigma)."""
    h = window_ps / 2.0
    if sigma_ps == 0.0 and skew_ps == 0.0:
        return 1.0 if abs(mean_ps) < h else 0.0

    def gauss_mass(lap):
        c = mean_ps + lap
        if sigma_ps == 0.0:
            return float(-h <= c < h)
        s = sigma_ps * math.sqrt(2.0)
        return 0.5 * (special.erf((h - c) / s) - special.erf((-h - c) / s))

    if skew_ps == 0.0:
        return gauss_mass(0.0)
    if sigma_ps == 0.0:
        def cdf(x):  # Laplace CDF
            return 0.5 * math.exp(x / skew_ps) if x < 0 else 1.0 - 0.5 * math.exp(-x / skew_ps)
        return cdf(h - mean_ps) - cdf(-h - mean_ps)
    pdf = lambda x: math.exp(-abs(x) / skew_ps) / (2.0 * skew_ps)
    lim = 40.0 * skew_ps
    # window edges are where the integrand changes fastest
    pts = sorted({p for p in (0.0, -mean_ps - h, -mean_ps + h) if -lim < p < lim})
    val, _ = integrate.quad(lambda x: pdf(x) * gauss_mass(x), -lim, lim, points=pts, limit=200)
    return val


@dataclass(frozen=True)
class AnalyticRates:
    """Expected detection rates for a configuration (no Monte Carlo)."""

    config: ExperimentConfig
    singles_hz: dict[int, float]
    _true: dict[tuple[int, int, int], float]

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "AnalyticRates":
        plan = _plan(config.validate(), None)
        rate = plan.rate_hz
        w_both, w_s, w_i = plan.weights
        singles = {int(i): float(d) for i, d in zip(plan.ids, plan.dark)}
        true: dict[tuple[int, int, int], float] = {}
        for k in range(len(w_both)):
            a, b = int(plan.ids[plan.sig_pos[k]]), int(plan.ids[plan.idl_pos[k]])
            singles[a] += rate * (w_both[k] + w_s[k])
            singles[b] += rate * (w_both[k] + w_i[k])
            key = (a, b, int(plan.idl_slot[k] - plan.sig_slot[k]))
            true[key] = true.get(key, 0.0) + rate * w_both[k]
        return cls(config, singles, true)

    def true_rate(self, ch_a: int, ch_b: int, delta_slots: int = 0) -> float:
        """Full-peak true coincidence rate, signal channel ``a`` to idler ``b``."""
        return self._true.get((ch_a, ch_b, delta_slots), 0.0)

    def _channel(self, cid):
        return next(c for c in self.config.channels if c.channel_id == cid)

    def peak_fraction(self, ch_a: int, ch_b: int, window_ps: float, delta_slots: int = 0,
                      center_ps: float = 0.0) -> float:
        a, b = self._channel(ch_a), self._channel(ch_b)
        tau = 0.0 if self.config.mode == "direct" else self.config.amzi_delay_ps
        mean = delta_slots * tau + b.delay_offset_ps - a.delay_offset_ps - center_ps
        sigma = math.hypot(a.jitter_sigma_ps, b.jitter_sigma_ps)
        return window_fraction(window_ps, sigma, self.config.pair_correlation_ps, mean)

    def windowed_true_rate(self, ch_a, ch_b, window_ps, center_ps=0.0) -> float:
        """True coincidences of all slot offsets landing in the window."""
        return sum(
            self.true_rate(ch_a, ch_b, d) * self.peak_fraction(ch_a, ch_b, window_ps, d, center_ps)
            for d in (-2, -1, 0, 1, 2)
        )

    def accidental_rate(self, ch_a, ch_b, window_ps) -> float:
        return self.singles_hz[ch_a] * self.singles_hz[ch_b] * window_ps / PS_PER_S
