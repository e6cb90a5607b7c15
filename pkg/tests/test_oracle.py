import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventbell.errors import NormalizationError
from eventbell.oracle import (
    PAULI,
    SYMMETRIC_CHI_SETTINGS,
    TwoSpinState,
    chsh_bound_settings,
    expectations_from_state,
    neutron_chsh,
    neutron_correlation,
    neutron_po,
    photon_direction,
    photon_product,
    photon_singlet,
    product_state,
    singlet_state,
)

unit = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi)).map(
    lambda p: np.array([math.sin(p[0]) * math.cos(p[1]), math.sin(p[0]) * math.sin(p[1]), math.cos(p[0])])
)


@settings(max_examples=50, deadline=None)
@given(unit, unit)
def test_singlet_table(a1, a2):
    E1, E2, E = expectations_from_state(singlet_state(), a1, a2)
    assert abs(E1) < 1e-12 and abs(E2) < 1e-12
    assert E == pytest.approx(-a1 @ a2, abs=1e-12)


def test_aligned_product():
    z = [0, 0, 1]
    assert expectations_from_state(TwoSpinState((1, 0, 0, 0)), z, z) == pytest.approx((1, 1, 1))


def _kron_oracle(state, a1, a2):
    # basis index s1 + 2 s2 means particle 2 is the slow index: kron(op2, op1)
    m1 = sum(a * p for a, p in zip(a1, PAULI))
    m2 = sum(a * p for a, p in zip(a2, PAULI))
    I = np.eye(2)
    psi = state.vector
    ev = lambda M: float(np.vdot(psi, M @ psi).real)
    return ev(np.kron(I, m1)), ev(np.kron(m2, I)), ev(np.kron(m2, m1))


@settings(max_examples=50, deadline=None)
@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi), st.floats(0, math.pi), st.floats(0, 2 * math.pi), unit, unit)
def test_product_state_against_4x4(t1, p1, t2, p2, a1, a2):
    state = product_state(t1, p1, t2, p2)
    got = expectations_from_state(state, a1, a2)
    assert got == pytest.approx(_kron_oracle(state, a1, a2), abs=1e-12)
    S1 = np.array([math.sin(t1) * math.cos(p1), math.sin(t1) * math.sin(p1), math.cos(t1)])
    S2 = np.array([math.sin(t2) * math.cos(p2), math.sin(t2) * math.sin(p2), math.cos(t2)])
    assert got[2] == pytest.approx((a1 @ S1) * (a2 @ S2), abs=1e-12)


def test_normalization_errors():
    with pytest.raises(NormalizationError):
        expectations_from_state(TwoSpinState((1, 1, 0, 0)), [0, 0, 1], [0, 0, 1])
    with pytest.raises(NormalizationError):
        expectations_from_state(singlet_state(), [0, 0, 2], [0, 0, 1])


def test_photon_singlet():
    assert photon_singlet(0.3, 0.3)[2] == pytest.approx(-1)
    assert photon_singlet(math.pi / 4, 0)[2] == pytest.approx(0, abs=1e-15)
    assert photon_singlet(0, math.pi / 2)[2] == pytest.approx(1)


@settings(max_examples=50, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4))
def test_photon_singlet_matches_spin_algebra(a1, a2):
    want = expectations_from_state(singlet_state(), photon_direction(a1), photon_direction(a2))
    assert photon_singlet(a1, a2) == pytest.approx(want, abs=1e-12)


def test_photon_product():
    for phi in np.linspace(0, math.pi, 7):
        E1, E2, E = photon_product(0.0, math.pi / 2, phi, 0.0)
        assert E == pytest.approx(-math.cos(2 * phi))
        assert E - E1 * E2 == pytest.approx(0, abs=1e-15)
    assert photon_product(0.4, 1.1, 0.4, 1.1)[2] == pytest.approx(1)
    assert photon_product(0.4 + math.pi / 4, 1.7, 0.4, 0.2)[2] == pytest.approx(0, abs=1e-15)


def test_neutron_po_and_correlation():
    assert neutron_po(0, 0, 0.2) == pytest.approx(0.064)
    assert neutron_po(0, math.pi, 0.7) == pytest.approx(0, abs=1e-15)
    assert neutron_po(math.pi / 2, 0, 0.2) == pytest.approx(0.032)
    assert neutron_correlation(0, 0) == 1
    assert neutron_correlation(0, math.pi / 2) == pytest.approx(0, abs=1e-15)
    assert neutron_correlation(math.pi / 2, math.pi / 2) == pytest.approx(-1)


def test_chsh_bound_settings():
    s, S = chsh_bound_settings()
    assert S == pytest.approx(2 * math.sqrt(2), abs=1e-6)
    assert neutron_chsh(*s) == pytest.approx(S, abs=1e-12)
    assert s == pytest.approx((0, math.pi / 4, math.pi / 2, -math.pi / 4))
    assert neutron_chsh(*SYMMETRIC_CHI_SETTINGS) == pytest.approx(math.sqrt(2))


def test_chsh_fine_scan_below_bound():
    # translate so chi = 0; the alpha and alpha' terms then separate
    g = np.arange(0, 2 * math.pi, 0.01)
    d = g[:, None]
    a = g[None, :]
    best = (np.cos(a) + np.cos(a + d)).max(axis=1) + (np.cos(a + d) - np.cos(a)).max(axis=1)
    assert best.max() <= 2 * math.sqrt(2) + 1e-6
    assert best.max() > 2 * math.sqrt(2) - 1e-3
