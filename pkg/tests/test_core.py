import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from timebin.core import (PORTS, CoincidenceTable, PhaseConfig, Port, amzi_transform,
                          analytic_x_visibility, build_joint_state, central_slot, cw_table,
                          emission_terms, marginal, post_select, x_fringe_probability)
from timebin.errors import ZeroMassSelection

angles = st.floats(-10.0, 10.0, allow_nan=False)
X_PORTS = (Port.X0, Port.X1)


def _amzi_matrix(theta):
    """12x2 map, rows (port, slot) in PORTS x (0,1,2), built from couplers.

    Input Y-splitter -> short/long arm; each arm taps half its power to a Z
    port and sends the rest to a 50:50 recombiner [[1, 1], [1, -1]]/sqrt2.
    """
    r = 1 / math.sqrt(2)
    m = np.zeros((12, 2), dtype=complex)
    row = lambda p, s: PORTS.index(p) * 3 + s
    for b in (0, 1):
        short, long_ = r, r * cmath.exp(1j * theta)
        m[row(Port.Z0, b), b] += short * r
        m[row(Port.Z1, b + 1), b] += long_ * r
        rec = np.array([[1, 1], [1, -1]]) * r
        for k, port in enumerate(X_PORTS):
            m[row(port, b), b] += rec[k, 0] * short * r
            m[row(port, b + 1), b] += rec[k, 1] * long_ * r
    return m


def _oracle_state(ph: PhaseConfig) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)  # (bin_s, bin_i)
    psi[0] = cmath.exp(1j * ph.delta_pump) / math.sqrt(2)
    psi[3] = 1 / math.sqrt(2)
    return np.kron(_amzi_matrix(ph.theta1), _amzi_matrix(ph.theta2)) @ psi


def _as_array(state) -> np.ndarray:
    out = np.zeros(144, dtype=complex)
    for (ps, ss, pi, si), a in state.amplitudes.items():
        out[(PORTS.index(ps) * 3 + ss) * 12 + PORTS.index(pi) * 3 + si] = a
    return out


def test_amzi_transform_single_photon():
    terms = amzi_transform(0, 0.3)
    assert math.isclose(sum(abs(a) ** 2 for *_, a in terms), 1.0, abs_tol=1e-15)
    amp = {(p, s): a for p, s, a in terms}
    assert amp[(Port.Z0, 0)] == 0.5
    assert cmath.isclose(amp[(Port.Z1, 1)], 0.5 * cmath.exp(0.3j))
    assert cmath.isclose(amp[(Port.X1, 1)], -cmath.exp(0.3j) / (2 * math.sqrt(2)))


def test_amzi_transform_rejects_bad_slot():
    with pytest.raises(ValueError):
        amzi_transform(2, 0.0)


def test_port_labels():
    assert Port.Z0.label() == "Z0"
    assert Port.X1.label(idler=True) == "X'1"
    assert Port.Z1.is_time_resolving and not Port.X0.is_time_resolving


@given(angles, angles, angles)
@settings(max_examples=60, deadline=None)
def test_joint_state_matches_coupler_oracle(t1, t2, d):
    ph = PhaseConfig(t1, t2, d)
    assert np.allclose(_as_array(build_joint_state(ph)), _oracle_state(ph), atol=1e-13)


@given(angles, angles, angles)
@settings(max_examples=60, deadline=None)
def test_joint_state_normalised(t1, t2, d):
    assert math.isclose(build_joint_state(PhaseConfig(t1, t2, d)).norm(), 1.0, abs_tol=1e-12)


def test_zero_phase_central_x_amplitude():
    # frozen from the coupler oracle: (1 + cos 0) / 64
    state = build_joint_state(PhaseConfig())
    assert abs(state.amplitude(Port.X0, 1, Port.X0, 1)) ** 2 == pytest.approx(1 / 32, abs=1e-15)
    total_xx = sum(abs(state.amplitude(a, 1, b, 1)) ** 2 for a in X_PORTS for b in X_PORTS)
    assert total_xx == pytest.approx(1 / 16, abs=1e-15)


def test_emission_terms_sum_to_state():
    ph = PhaseConfig(0.2, 1.1, -0.4)
    terms = emission_terms(ph)
    assert len(terms) == 2
    state = build_joint_state(ph)
    for k, a in state.amplitudes.items():
        assert cmath.isclose(terms[0].get(k, 0) + terms[1].get(k, 0), a, abs_tol=1e-15)


@given(angles, angles, angles)
@settings(max_examples=100, deadline=None)
def test_x_post_selection_matches_closed_form(t1, t2, d):
    ph = PhaseConfig(t1, t2, d)
    table = post_select(build_joint_state(ph), central_slot(X_PORTS))
    pc, pa = x_fringe_probability(ph.phase_sum)
    for a in X_PORTS:
        for b in X_PORTS:
            want = pc if a == b else pa
            assert table[(a, 1, b, 1)] == pytest.approx(want, abs=1e-12)
    assert table.normalization == pytest.approx(1 / 16, abs=1e-12)


def test_phase_dependence_only_through_sum():
    a = post_select(build_joint_state(PhaseConfig(0.3, 0.5, 0.2)), central_slot(X_PORTS))
    b = post_select(build_joint_state(PhaseConfig(1.0, 0.0, 0.0)), central_slot(X_PORTS))
    for k, p in a.items():
        assert p == pytest.approx(b[k], abs=1e-12)


def test_ideal_visibilities():
    assert analytic_x_visibility() == 1.0
    table = post_select(build_joint_state(), central_slot((Port.Z0, Port.Z1)))
    # Z cross-port coincidences at a common slot vanish identically
    assert table.pair(Port.Z0, Port.Z1) == 0.0
    assert table.pair(Port.Z1, Port.Z0) == 0.0


def test_zero_mass_selection():
    with pytest.raises(ZeroMassSelection):
        post_select(build_joint_state(), lambda ps, ss, pi, si: ss == 2 and si == 0)


def test_marginals_are_phase_independent():
    m1 = marginal(build_joint_state(PhaseConfig(0.0, 0.0, 0.0)), "signal")
    m2 = marginal(build_joint_state(PhaseConfig(1.3, -0.7, 2.0)), "signal")
    for k in set(m1) | set(m2):
        assert m1.get(k, 0.0) == pytest.approx(m2.get(k, 0.0), abs=1e-12)
    assert math.fsum(m1.values()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        marginal(build_joint_state(), "pump")


def test_coincidence_table_helpers():
    t = CoincidenceTable({(Port.X0, 1, Port.X0, 1): 0.25, (Port.X0, 0, Port.X0, 1): 0.75})
    assert t.total() == 1.0
    assert t.pair(Port.X0, Port.X0) == 1.0
    assert t.pair(Port.X0, Port.X0, slot=1) == 0.25
    assert t[(Port.Z0, 0, Port.Z0, 0)] == 0.0


@given(angles, angles, angles, st.booleans())
@settings(max_examples=60, deadline=None)
def test_cw_table_unit_mass(t1, t2, d, coherent):
    t = cw_table(PhaseConfig(t1, t2, d), coherent)
    assert t.total() == pytest.approx(1.0, abs=1e-12)
    assert all(not (ss == si and ss != 1) for (_, ss, _, si) in t.probabilities)


def test_cw_table_fringe_and_z_structure():
    for phi in (0.0, math.pi / 3, math.pi):
        t = cw_table(PhaseConfig(phi, 0.0, 0.0))
        # stationary slot-1 X-X' entries are twice the two-bin ones
        assert t[(Port.X0, 1, Port.X0, 1)] == pytest.approx((1 + math.cos(phi)) / 32, abs=1e-15)
        inc = cw_table(PhaseConfig(phi, 0.0, 0.0), coherent=False)
        assert inc[(Port.X0, 1, Port.X0, 1)] == pytest.approx(1 / 32, abs=1e-15)
        assert t[(Port.Z0, 1, Port.Z1, 1)] == 0.0
        assert t[(Port.Z0, 0, Port.Z1, 1)] == pytest.approx(1 / 32)
        assert t.pair(Port.Z0, Port.Z0) == pytest.approx(inc.pair(Port.Z0, Port.Z0))
