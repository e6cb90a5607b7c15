"""Closed-form quantum-theory predictions used as reference values."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import NormalizationError

__all__ = [
    "TwoSpinState",
    "singlet_state",
    "product_state",
    "expectations_from_state",
    "photon_direction",
    "photon_singlet",
    "photon_product",
    "neutron_po",
    "neutron_correlation",
    "neutron_chsh",
    "chsh_bound_settings",
    "SYMMETRIC_CHI_SETTINGS",
    "PAULI",
]

PAULI = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)

# (alpha, chi, alpha', chi') with chi' = chi; gives sqrt(2), not the maximum
SYMMETRIC_CHI_SETTINGS = (0.0, math.pi / 4, math.pi / 2, math.pi / 4)


@dataclass(frozen=True)
class TwoSpinState:
    """Amplitudes of |uu>, |du>, |ud>, |dd> (first label is particle 1).

    The basis index is ``s1 + 2 * s2`` with ``s = 0`` for up, so the
    amplitudes reshape to ``psi[s2, s1]``.
    """

    c: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex).reshape(4)
        object.__setattr__(self, "c", tuple(complex(z) for z in c))

    @property
    def vector(self):
        return np.array(self.c, dtype=complex)


def singlet_state():
    s = 1.0 / math.sqrt(2.0)
    return TwoSpinState((0.0, s, -s, 0.0))


def _spinor(theta, phi):
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def product_state(theta1, phi1, theta2, phi2):
    """Product of single-spin states pointing along (theta_j, phi_j)."""
    u1, u2 = _spinor(theta1, phi1), _spinor(theta2, phi2)
    return TwoSpinState(np.outer(u2, u1).reshape(4))


def _sigma_dot(a):
    a = np.asarray(a, dtype=float).reshape(3)
    if abs(a @ a - 1.0) > 1e-9:
        raise NormalizationError(f"direction {a} is not a unit vector")
    return np.einsum("i,ijk->jk", a, PAULI)


def expectations_from_state(state, a1, a2):
    """Return (E1, E2, E): <s1.a1>, <s2.a2> and <s1.a1 s2.a2>."""
    psi = state.vector
    n = float(np.vdot(psi, psi).real)
    if abs(n - 1.0) > 1e-9:
        raise NormalizationError(f"state norm^2 is {n}, expected 1")
    psi = psi.reshape(2, 2)  # [s2, s1]
    m1, m2 = _sigma_dot(a1), _sigma_dot(a2)
    p1 = psi @ m1.T  # acts on s1
    p2 = m2 @ psi  # acts on s2
    p12 = m2 @ psi @ m1.T
    E1 = np.vdot(psi, p1).real
    E2 = np.vdot(psi, p2).real
    E = np.vdot(psi, p12).real
    return float(E1), float(E2), float(E)


def photon_direction(a):
    """Spin-space direction of a linear polarizer at angle ``a`` (angles double)."""
    return np.array([math.cos(2 * a), math.sin(2 * a), 0.0])


def photon_singlet(a1, a2):
    return 0.0, 0.0, -math.cos(2 * (a1 - a2))


def photon_product(zeta1, zeta2, a1, a2):
    E1 = math.cos(2 * (zeta1 - a1))
    E2 = math.cos(2 * (zeta2 - a2))
    return E1, E2, E1 * E2


def neutron_po(alpha, chi, R):
    """O-beam detection probability T R^2 [1 + cos(alpha + chi)]."""
    T = 1.0 - R
    return T * R * R * (1.0 + np.cos(alpha + chi))


def neutron_correlation(alpha, chi):
    return np.cos(alpha + chi)


def neutron_chsh(alpha, chi, alpha_p, chi_p):
    """E(a,c) + E(a,c') - E(a',c) + E(a',c') with E = cos(alpha + chi)."""
    E = neutron_correlation
    return E(alpha, chi) + E(alpha, chi_p) - E(alpha_p, chi) + E(alpha_p, chi_p)


def chsh_bound_settings(steps=32):
    """Grid-search maximizer of :func:`neutron_chsh` on a 2pi/steps mesh.

    Ties are broken towards alpha = 0, then the smallest total |angle|, then
    the larger chi.  Returns ``((alpha, chi, alpha', chi'), S)``.
    """
    g = (np.arange(steps) - steps // 2) * (2 * math.pi / steps)
    A, C, Ap, Cp = np.meshgrid(g, g, g, g, indexing="ij", sparse=True)
    S = neutron_chsh(A, C, Ap, Cp)
    best = S.max()
    idx = np.argwhere(S >= best - 1e-12)
    cand = [tuple(float(g[i]) for i in row) for row in idx]
    pick = min(cand, key=lambda s: (abs(s[0]), round(sum(abs(x) for x in s), 9), tuple(-x for x in s)))
    return pick, float(neutron_chsh(*pick))
