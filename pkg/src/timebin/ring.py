"""Classical model of the add-drop Si micro-ring source.

The resonance comb is equally spaced in frequency, i.e. in inverse
wavelength, with spacing ``1 / (n_g * 2 pi R)``.  Adjacent resonances are
therefore separated by ``lambda_m * lambda_{m+1} / (2 pi R n_g)``, the usual
``lambda^2 / (n_g L)`` free spectral range, and symmetric comb partners
conserve energy exactly.  Temperature shifts every resonance by the same
wavelength offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoResonanceInWindow, RangeError

C_NM_PER_PS = 2.99792458e5  # speed of light

# Pump operating points: 1550.59 nm at 10 C, 1551.27 nm at 20 C, 1551.63 nm at 25 C.
SHIFT_PUMP_ANCHORED = 0.069  # nm / C
# 2 nm over 10..30 C.
SHIFT_TWO_NM_SPAN = 0.1  # nm / C

# 21 MHz of pairs at 0.41 mW pump.
PAIR_RATE_COEFFICIENT = 21e6 / 0.41**2  # Hz / mW^2

DEFAULT_WINDOW = (1500.0, 1600.0)


@dataclass(frozen=True)
class RingSpec:
    radius_m: float = 7e-6
    group_index: float = 4.31
    q_factor: float = 20000.0
    thermo_optic_shift: float = SHIFT_PUMP_ANCHORED  # nm per degC
    ref_wavelength_nm: float = 1551.63
    ref_temperature_c: float = 25.0

    def __post_init__(self):
        if not self.radius_m > 0:
            raise RangeError("radius must be > 0", "ring.radius_m")
        if not self.q_factor > 1:
            raise RangeError("Q must be > 1", "ring.q_factor")
        if not 1.0 < self.group_index < 6.0:
            raise RangeError("group index must lie in (1, 6)", "ring.group_index")
        if not self.ref_wavelength_nm > 0:
            raise RangeError("reference wavelength must be > 0", "ring.ref_wavelength_nm")

    @property
    def round_trip_nm(self) -> float:
        """Optical round-trip length n_g * 2 pi R, in nm."""
        return self.group_index * 2.0 * math.pi * self.radius_m * 1e9


@dataclass(frozen=True)
class SourceSpec:
    pump_power_mw: float = 0.41
    pump_wavelength_nm: float = 1551.63
    pair_rate_coefficient: float = PAIR_RATE_COEFFICIENT
    pair_correlation_time_ps: float | None = None  # None: cavity photon lifetime

    def __post_init__(self):
        if self.pump_power_mw < 0:
            raise RangeError("pump power must be >= 0", "source.pump_power_mw")
        if self.pair_rate_coefficient < 0:
            raise RangeError("pair rate coefficient must be >= 0",
                             "source.pair_rate_coefficient_hz_per_mw2")
        if self.pair_correlation_time_ps is not None and not self.pair_correlation_time_ps > 0:
            raise RangeError("pair correlation time must be > 0", "source.pair_correlation_time_ps")


def free_spectral_range(spec: RingSpec, wavelength_nm: float | None = None) -> float:
    lam = spec.ref_wavelength_nm if wavelength_nm is None else wavelength_nm
    return lam**2 / spec.round_trip_nm


def _thermal_offset(spec: RingSpec, temperature_c: float) -> float:
    if not -50.0 <= temperature_c <= 150.0:
        raise RangeError(f"temperature {temperature_c} C outside -50..150 C", "ring.temperature_c")
    return spec.thermo_optic_shift * (temperature_c - spec.ref_temperature_c)


def _order_wavelength(spec: RingSpec, m, offset: float):
    # m counts resonances toward shorter wavelength from the reference one
    return 1.0 / (1.0 / spec.ref_wavelength_nm + np.asarray(m) / spec.round_trip_nm) + offset


def resonance_comb(spec: RingSpec, temperature_c: float, window=DEFAULT_WINDOW) -> np.ndarray:
    """Resonance wavelengths (nm) inside ``window``, ascending."""
    lo, hi = window
    if not lo < hi:
        raise ValueError("empty wavelength window")
    d = _thermal_offset(spec, temperature_c)
    inv = 1.0 / spec.ref_wavelength_nm
    L = spec.round_trip_nm
    # orders whose untuned wavelength could land in [lo - d, hi - d]
    m_min = math.floor((1.0 / (hi - d) - inv) * L) - 1
    m_max = math.ceil((1.0 / max(lo - d, 1e-9) - inv) * L) + 1
    m = np.arange(m_max, m_min - 1, -1)
    lam = _order_wavelength(spec, m, d)
    return lam[(lam >= lo) & (lam <= hi)]


def pump_resonance(spec: RingSpec, temperature_c: float) -> float:
    return float(_order_wavelength(spec, 0, _thermal_offset(spec, temperature_c)))


def nearest_resonance(spec: RingSpec, temperature_c: float, wavelength_nm):
    d = _thermal_offset(spec, temperature_c)
    lam = np.asarray(wavelength_nm, dtype=float)
    m = np.rint((1.0 / (lam - d) - 1.0 / spec.ref_wavelength_nm) * spec.round_trip_nm)
    return _order_wavelength(spec, m, d)


def drop_port_transmission(spec: RingSpec, temperature_c: float, wavelength_nm):
    """Lorentzian drop-port response of the nearest resonance, unit peak."""
    lam = np.asarray(wavelength_nm, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be > 0")
    lam0 = nearest_resonance(spec, temperature_c, lam)
    hw = lam0 / spec.q_factor / 2.0
    t = hw**2 / ((lam - lam0) ** 2 + hw**2)
    return float(t) if t.ndim == 0 else t


def linewidth_nm(spec: RingSpec, wavelength_nm: float | None = None) -> float:
    lam = spec.ref_wavelength_nm if wavelength_nm is None else wavelength_nm
    return lam / spec.q_factor


def pair_generation_rate(source: SourceSpec) -> float:
    """SFWM pair rate in Hz; quadratic in pump power."""
    return source.pair_rate_coefficient * source.pump_power_mw**2


def signal_idler_wavelengths(spec: RingSpec, temperature_c: float, comb_offset: int = 1,
                             window=DEFAULT_WINDOW) -> tuple[float, float]:
    """Resonances ``k`` orders either side of the pump: (signal, idler) in nm.

    Signal is the long-wavelength partner.
    """
    if comb_offset < 1:
        raise ValueError("comb offset must be >= 1")
    d = _thermal_offset(spec, temperature_c)
    signal = float(_order_wavelength(spec, -comb_offset, d))
    idler = float(_order_wavelength(spec, comb_offset, d))
    lo, hi = window
    if not (lo <= idler and signal <= hi):
        raise NoResonanceInWindow(
            f"orders +-{comb_offset} ({idler:.2f}, {signal:.2f} nm) fall outside {lo}..{hi} nm")
    return signal, idler


def energy_mismatch(pump_nm: float, signal_nm: float, idler_nm: float) -> float:
    """2/lambda_p - 1/lambda_s - 1/lambda_i in nm^-1."""
    return 2.0 / pump_nm - 1.0 / signal_nm - 1.0 / idler_nm


def cavity_photon_lifetime(spec: RingSpec, wavelength_nm: float | None = None) -> float:
    """Q * lambda / (2 pi c) in ps."""
    lam = spec.ref_wavelength_nm if wavelength_nm is None else wavelength_nm
    return spec.q_factor * lam / (2.0 * math.pi * C_NM_PER_PS)


def filter_comb_offset(spec: RingSpec, temperature_c: float, signal_filter_nm: float,
                       idler_filter_nm: float, bandwidth_nm: float = 2.0, max_offset: int = 8):
    """Comb offset ``k`` whose signal/idler resonances both sit in the filters, else None."""
    half = bandwidth_nm / 2.0
    for k in range(1, max_offset + 1):
        try:
            s, i = signal_idler_wavelengths(spec, temperature_c, k, window=(1.0, 1e5))
        except NoResonanceInWindow:
            break
        if abs(s - signal_filter_nm) <= half and abs(i - idler_filter_nm) <= half:
            return k
    return None
