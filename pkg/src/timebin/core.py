"""Complex-amplitude engine for a time-bin photon pair behind two 2x4 AMZIs.

Each receiver is an asymmetric Mach-Zehnder interferometer with four
outputs: ``Z0`` taps the short arm, ``Z1`` taps the long arm and ``X0``/``X1``
are the two outputs of the recombining coupler.  A photon emitted in time
bin ``b`` leaves the short arm in slot ``b`` and the long arm in slot ``b+1``
(slots 0, 1, 2 stand for t-tau, t, t+tau).

The pair state fed into the interferometers is

    (e^{i delta} a'(0) b'(0) + a'(1) b'(1)) / sqrt(2)

where ``delta`` is the pump phase difference between the two emission bins
(a constant for a CW pump).  Long arms carry ``e^{i theta}`` and ``X1`` takes
the minus sign of the recombiner.
"""

from __future__ import annotations

import cmath
import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

from .errors import ZeroMassSelection

NORM_TOL = 1e-12
ZERO_MASS = 1e-15

_HALF = 0.5
_X_AMP = 1.0 / (2.0 * math.sqrt(2.0))


class Port(enum.Enum):
    Z0 = "Z0"
    X0 = "X0"
    X1 = "X1"
    Z1 = "Z1"

    @property
    def is_time_resolving(self) -> bool:
        return self in (Port.Z0, Port.Z1)

    def label(self, idler: bool = False) -> str:
        """Report label; idler ports are primed (``Z'0``)."""
        if not idler:
            return self.value
        return f"{self.value[0]}'{self.value[1]}"


PORTS = (Port.Z0, Port.X0, Port.X1, Port.Z1)
SLOTS = (0, 1, 2)
EMISSION_BINS = (0, 1)

Outcome = tuple  # (Port, slot, Port, slot): signal first, idler second


@dataclass(frozen=True)
class PhaseConfig:
    theta1: float = 0.0
    theta2: float = 0.0
    delta_pump: float = 0.0

    @property
    def phase_sum(self) -> float:
        return self.theta1 + self.theta2 + self.delta_pump

    def reduced(self) -> "PhaseConfig":
        tau = 2.0 * math.pi
        return PhaseConfig(self.theta1 % tau, self.theta2 % tau, self.delta_pump % tau)


@dataclass(frozen=True)
class JointState:
    """Sparse map ``(port_s, slot_s, port_i, slot_i) -> complex amplitude``."""

    amplitudes: Mapping[Outcome, complex]

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", MappingProxyType(dict(self.amplitudes)))

    def norm(self) -> float:
        return math.fsum(abs(a) ** 2 for a in self.amplitudes.values())

    def amplitude(self, ps: Port, ss: int, pi: Port, si: int) -> complex:
        return self.amplitudes.get((ps, ss, pi, si), 0j)

    def probabilities(self) -> "CoincidenceTable":
        return CoincidenceTable({k: abs(a) ** 2 for k, a in self.amplitudes.items()}, 1.0)


@dataclass(frozen=True)
class CoincidenceTable:
    """Outcome probabilities plus the mass retained by any post-selection."""

    probabilities: Mapping[Outcome, float]
    normalization: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "probabilities", MappingProxyType(dict(self.probabilities)))

    def __getitem__(self, key) -> float:
        return self.probabilities.get(tuple(key), 0.0)

    def total(self) -> float:
        return math.fsum(self.probabilities.values())

    def pair(self, ps: Port, pi: Port, slot: int | None = None) -> float:
        """Probability summed over slots (or at one common slot) for a port pair."""
        return math.fsum(
            p for (a, sa, b, sb), p in self.probabilities.items()
            if a is ps and b is pi and (slot is None or sa == sb == slot)
        )

    def items(self):
        return self.probabilities.items()


def amzi_transform(input_slot: int, theta: float) -> list[tuple[Port, int, complex]]:
    """Output terms of one AMZI for a photon entering in emission bin ``input_slot``."""
    if input_slot not in EMISSION_BINS:
        raise ValueError(f"emission bin must be 0 or 1, got {input_slot!r}")
    b = input_slot
    long_phase = cmath.exp(1j * theta)
    return [
        (Port.Z0, b, complex(_HALF)),
        (Port.Z1, b + 1, _HALF * long_phase),
        (Port.X0, b, complex(_X_AMP)),
        (Port.X0, b + 1, _X_AMP * long_phase),
        (Port.X1, b, complex(_X_AMP)),
        (Port.X1, b + 1, -_X_AMP * long_phase),
    ]


def emission_terms(phases: PhaseConfig) -> list[dict[Outcome, complex]]:
    """Per-emission-bin contributions to the joint state, before summation."""
    weights = (cmath.exp(1j * phases.delta_pump) / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
    terms = []
    for b, w in zip(EMISSION_BINS, weights):
        amp: dict[Outcome, complex] = defaultdict(complex)
        for ps, ss, a_s in amzi_transform(b, phases.theta1):
            for pi, si, a_i in amzi_transform(b, phases.theta2):
                amp[(ps, ss, pi, si)] += w * a_s * a_i
        terms.append(dict(amp))
    return terms


def build_joint_state(phases: PhaseConfig = PhaseConfig()) -> JointState:
    total: dict[Outcome, complex] = defaultdict(complex)
    for term in emission_terms(phases):
        for key, a in term.items():
            total[key] += a
    return JointState(total)


def post_select(state: JointState, predicate: Callable[[Port, int, Port, int], bool]) -> CoincidenceTable:
    """Restrict to outcomes accepted by ``predicate`` and renormalise."""
    kept = {k: abs(a) ** 2 for k, a in state.amplitudes.items() if predicate(*k)}
    mass = math.fsum(kept.values())
    if mass < ZERO_MASS:
        raise ZeroMassSelection(f"selected outcomes carry probability {mass:.3g}")
    return CoincidenceTable({k: p / mass for k, p in kept.items()}, mass)


def central_slot(ports: Iterable[Port]) -> Callable[[Port, int, Port, int], bool]:
    """Predicate: both photons in slot 1 and both on one of ``ports``."""
    allowed = frozenset(ports)
    return lambda ps, ss, pi, si: ss == 1 and si == 1 and ps in allowed and pi in allowed


def x_fringe_probability(phi_sum: float) -> tuple[float, float]:
    """Per-pairing probabilities among central-slot X-X' coincidences.

    Returns ``(p_correlated, p_anticorrelated)``: each of X0-X'0 and X1-X'1
    has the first value, each of X0-X'1 and X1-X'0 the second.
    """
    c = math.cos(phi_sum)
    return (1.0 + c) / 4.0, (1.0 - c) / 4.0


def analytic_x_visibility() -> float:
    lo, hi = x_fringe_probability(math.pi)[0], x_fringe_probability(0.0)[0]
    return (hi - lo) / (hi + lo)


def marginal(state: JointState, arm: str) -> dict[tuple[Port, int], float]:
    if arm not in ("signal", "idler"):
        raise ValueError("arm must be 'signal' or 'idler'")
    acc: dict[tuple[Port, int], list[float]] = defaultdict(list)
    for (ps, ss, pi, si), a in state.amplitudes.items():
        key = (ps, ss) if arm == "signal" else (pi, si)
        acc[key].append(abs(a) ** 2)
    return {k: math.fsum(v) for k, v in acc.items()}


def cw_table(phases: PhaseConfig = PhaseConfig(), coherent: bool = True) -> CoincidenceTable:
    """Stationary outcome distribution for a CW-pumped source.

    With a CW pump there is no absolute bin boundary, so every equal-slot
    coincidence has both a short-short and a long-long history.  The two-bin
    expansion only has that pair of histories at slot 1; slots (0, 0) and
    (2, 2) are truncation edges.  The stationary table drops those edges and
    doubles the slot-1 entries, which keeps unit mass.  ``coherent=False``
    adds the two histories in probability rather than amplitude (fully
    distinguishable paths).
    """
    terms = emission_terms(phases)
    if coherent:
        state = build_joint_state(phases)
        probs = {k: abs(a) ** 2 for k, a in state.amplitudes.items()}
    else:
        probs = defaultdict(float)
        for term in terms:
            for k, a in term.items():
                probs[k] += abs(a) ** 2
    out = {}
    for (ps, ss, pi, si), p in probs.items():
        if ss == si == 1:
            out[(ps, ss, pi, si)] = 2.0 * p
        elif ss == si:
            continue
        else:
            out[(ps, ss, pi, si)] = p
    return CoincidenceTable(out, 1.0)
