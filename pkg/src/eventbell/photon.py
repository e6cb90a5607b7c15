"""Event-by-event model of the single-photon EPRB experiments I, II and III.

A source emits photon pairs with orthogonal polarizations.  Each photon
travels to a station where an electro-optic modulator (EOM) rotates its
polarization by one of two angles chosen by a random bit, a polarizing beam
splitter sends it to detector +1 or -1 with probability cos^2 of the rotated
angle, and the detection receives a time tag drawn uniformly from
``[0, T0 * sin^4(2 xi')]``.  Detectors are ideal: every arriving photon
produces exactly one record.

Experiment I uses a random source angle, experiment II a fixed one, and
experiment III places a polarizer with fixed orientation in each arm which
discards photons leaving through its -1 port.

The scalar rules (:func:`emit_pair`, :func:`eom_rotate`, :func:`malus_split`,
...) document the model one step at a time; :func:`run_experiment` runs the
same steps in a compiled loop that consumes the random stream in exactly the
same order, so both paths produce identical logs from identical streams.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numba
import numpy as np

from .errors import ConfigError

__all__ = [
    "PhotonState",
    "StationSettings",
    "EventRecord",
    "EventLog",
    "ExperimentI",
    "ExperimentII",
    "ExperimentIII",
    "emit_pair",
    "source_polarizer",
    "eom_rotate",
    "malus_rule",
    "malus_split",
    "time_tag_rule",
    "time_tag",
    "run_experiment",
    "run_experiment_reference",
    "simulate_tallies",
    "read_log",
    "write_logs",
]

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi
LOG_HEADER = "emission,x,t,phi,A"


@dataclass(frozen=True)
class PhotonState:
    """Polarization angle ``xi`` (reduced to [0, 2pi)) and destination station."""

    xi: float
    station: int

    def __post_init__(self):
        if self.station not in (1, 2):
            raise ConfigError(f"station must be 1 or 2, got {self.station}")
        object.__setattr__(self, "xi", float(self.xi) % TWO_PI)


@dataclass(frozen=True)
class StationSettings:
    """EOM angles of one station and its time-tag scale.

    ``a`` is applied when the setting bit is 0 and ``a_prime`` when it is 1;
    ``a_prime`` defaults to ``a`` (a single fixed setting).
    """

    a: float
    a_prime: Optional[float] = None
    T0: float = 1000.0

    def __post_init__(self):
        if self.a_prime is None:
            object.__setattr__(self, "a_prime", self.a)
        if not self.T0 > 0:
            raise ConfigError(f"T0 must be positive, got {self.T0}")


class EventRecord(NamedTuple):
    emission: int
    x: int
    t: float
    phi: float
    A: int


@dataclass(frozen=True)
class ExperimentI:
    """Orthogonal pair with a uniformly random polarization."""


@dataclass(frozen=True)
class ExperimentII:
    """Orthogonal pair with the fixed polarization ``xi_fixed`` for photon 1."""

    xi_fixed: float = 0.0


@dataclass(frozen=True)
class ExperimentIII:
    """Random orthogonal pair followed by fixed polarizers at ``eta1``, ``eta2``."""

    eta1: float = 0.0
    eta2: float = HALF_PI


SourceMode = Union[ExperimentI, ExperimentII, ExperimentIII]


@dataclass
class EventLog:
    """Columnar record of the detection events of one station.

    Columns are numpy arrays of equal length; ``emission`` identifies the
    source pair each event belongs to.
    """

    station: int
    emission: np.ndarray
    x: np.ndarray
    t: np.ndarray
    phi: np.ndarray
    A: np.ndarray
    T0: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        self.emission = np.asarray(self.emission, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int8)
        self.t = np.asarray(self.t, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.int8)
        n = len(self.emission)
        for name in ("x", "t", "phi", "A"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"column {name!r} has length != {n}")

    def __len__(self):
        return len(self.emission)

    def __getitem__(self, i):
        return EventRecord(
            int(self.emission[i]),
            int(self.x[i]),
            float(self.t[i]),
            float(self.phi[i]),
            int(self.A[i]),
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.station == other.station and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("emission", "x", "t", "phi", "A")
        )

    @classmethod
    def from_records(cls, station, records, T0=None):
        records = list(records)
        if not records:
            return cls(station, [], [], [], [], [], T0=T0)
        cols = list(zip(*records))
        return cls(station, *cols, T0=T0)

    def check_indexing(self):
        """Raise ConfigError unless emission indices strictly increase."""
        if len(self) > 1 and not np.all(np.diff(self.emission) > 0):
            raise ConfigError(
                f"station {self.station}: emission indices are not strictly increasing"
            )

    def to_csv(self, path):
        """Write ``emission,x,t,phi,A`` rows; floats keep all 17 digits."""
        with open(path, "w", newline="\n") as fh:
            fh.write(LOG_HEADER + "\n")
            for e, x, t, phi, a in zip(
                self.emission.tolist(),
                self.x.tolist(),
                self.t.tolist(),
                self.phi.tolist(),
                self.A.tolist(),
            ):
                fh.write(f"{e},{x},{t!r},{phi!r},{a}\n")


def read_log(path, station):
    """Load an :class:`EventLog` written by :meth:`EventLog.to_csv`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != LOG_HEADER:
            raise ConfigError(f"{path}: expected header {LOG_HEADER!r}, got {header!r}")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.size == 0:
        return EventLog.from_records(station, [])
    return EventLog(
        station,
        rows[:, 0].astype(np.int64),
        rows[:, 1].astype(np.int8),
        rows[:, 2],
        rows[:, 3],
        rows[:, 4].astype(np.int8),
    )


def write_logs(prefix, log1, log2):
    """Write ``<prefix>_station1.csv`` and ``<prefix>_station2.csv``."""
    p1 = f"{prefix}_station1.csv"
    p2 = f"{prefix}_station2.csv"
    log1.to_csv(p1)
    log2.to_csv(p2)
    return p1, p2


# --- scalar rules -----------------------------------------------------------


def emit_pair(mode, stream):
    """Emit two photons with polarizations xi and xi + pi/2."""
    if isinstance(mode, ExperimentII):
        xi = float(mode.xi_fixed)
    else:
        xi = stream.uniform_angle()
    return PhotonState(xi, 1), PhotonState(xi + HALF_PI, 2)


def malus_rule(xi_prime, r):
    """+1 if ``r <= cos^2(xi_prime)`` else -1."""
    c = math.cos(xi_prime)
    return 1 if r <= c * c else -1


def malus_split(xi_prime, stream):
    """Polarizing beam splitter: draw r in (0, 1) and apply :func:`malus_rule`."""
    return malus_rule(xi_prime, stream.uniform_open())


def source_polarizer(p, eta, stream):
    """Fixed polarizer between source and station (experiment III).

    Returns a photon polarized along ``eta`` when it leaves through the +1
    port and ``None`` when it is discarded.
    """
    if malus_split(p.xi - eta, stream) == 1:
        return PhotonState(eta, p.station)
    return None


def eom_rotate(p, settings, A):
    """Rotate by the EOM angle selected by bit ``A``; returns (xi', phi)."""
    phi = settings.a if A == 0 else settings.a_prime
    return p.xi - phi, phi


def time_tag_rule(xi_prime, T0, r):
    """Time tag ``T0 * sin^4(2 xi') * r``."""
    s = math.sin(2.0 * xi_prime)
    s2 = s * s
    return T0 * (s2 * s2) * r


def time_tag(xi_prime, T0, stream):
    """Delay drawn uniformly from [0, T0 sin^4(2 xi')]."""
    if not T0 > 0:
        raise ConfigError(f"T0 must be positive, got {T0}")
    return time_tag_rule(xi_prime, T0, stream.uniform_open())


def _mode_params(mode):
    if isinstance(mode, ExperimentI):
        return 1, 0.0, 0.0, 0.0
    if isinstance(mode, ExperimentII):
        return 2, float(mode.xi_fixed), 0.0, 0.0
    if isinstance(mode, ExperimentIII):
        return 3, 0.0, float(mode.eta1), float(mode.eta2)
    raise ConfigError(f"unknown source mode {mode!r}")


def run_experiment_reference(mode, settings1, settings2, n_pairs, stream, emission_offset=0):
    """Pure-Python version of :func:`run_experiment` built from the scalar rules.

    Slow; used to cross-check the compiled kernel.
    """
    if n_pairs < 1:
        raise ConfigError("n_pairs must be >= 1")
    _mode_params(mode)
    recs = ([], [])
    settings = (settings1, settings2)
    for n in range(n_pairs):
        pair = list(emit_pair(mode, stream))
        if isinstance(mode, ExperimentIII):
            pair[0] = source_polarizer(pair[0], mode.eta1, stream)
            pair[1] = source_polarizer(pair[1], mode.eta2, stream)
        for j, p in enumerate(pair):
            if p is None:
                continue
            A = stream.random_bit()
            xi_prime, phi = eom_rotate(p, settings[j], A)
            x = malus_split(xi_prime, stream)
            t = time_tag(xi_prime, settings[j].T0, stream)
            recs[j].append(EventRecord(emission_offset + n, x, t, phi, A))
    return (
        EventLog.from_records(1, recs[0], T0=settings1.T0),
        EventLog.from_records(2, recs[1], T0=settings2.T0),
    )


# --- compiled kernel ----------------------------------------------------------


@numba.njit(cache=True)
def _open01(gen):
    r = gen.random()
    while r == 0.0:
        r = gen.random()
    return r


@numba.njit(cache=True)
def _simulate_pairs(
    gen, n, variant, xi_fixed, eta1, eta2, ang, T0s, x, t, phi, A, present, store, kwin, tau, cw, ca
):
    # ang = [a1, a1', a2, a2'].  With store=True the per-event arrays (2, n)
    # are filled; otherwise only the coincidence tallies cw (windowed) and ca
    # (all pairs), indexed [A1, A2, x1 == -1, x2 == -1], are accumulated.
    two_pi = 2.0 * math.pi
    half_pi = 0.5 * math.pi
    etas = (eta1, eta2)
    xis = np.empty(2)
    xo = np.zeros(2, dtype=np.int64)
    ko = np.zeros(2, dtype=np.int64)
    bo = np.zeros(2, dtype=np.int64)
    ok = np.zeros(2, dtype=np.bool_)
    # when the angle reaching the EOM is fixed, cos^2 and sin^4 take only
    # four values; evaluate them once with the same arithmetic
    fixed = variant != 1
    c2 = np.empty((2, 2))
    s4 = np.empty((2, 2))
    if fixed:
        if variant == 2:
            base = (xi_fixed % two_pi, (xi_fixed + half_pi) % two_pi)
        else:
            base = (eta1 % two_pi, eta2 % two_pi)
        for j in range(2):
            for b in range(2):
                xp = base[j] - ang[2 * j + b]
                c = math.cos(xp)
                c2[j, b] = c * c
                s = math.sin(2.0 * xp)
                s2 = s * s
                s4[j, b] = s2 * s2
    for i in range(n):
        if variant == 2:
            xi = xi_fixed
        else:
            xi = two_pi * gen.random()
        xis[0] = xi % two_pi
        xis[1] = (xi + half_pi) % two_pi
        ok[0] = True
        ok[1] = True
        if variant == 3:
            for j in range(2):
                c = math.cos(xis[j] - etas[j])
                if _open01(gen) <= c * c:
                    xis[j] = etas[j] % two_pi
                else:
                    ok[j] = False
        for j in range(2):
            if not ok[j]:
                continue
            bit = 1 if gen.random() >= 0.5 else 0
            p = ang[2 * j + bit]
            if fixed:
                cc = c2[j, bit]
                ss = s4[j, bit]
            else:
                xp = xis[j] - p
                c = math.cos(xp)
                cc = c * c
                s = math.sin(2.0 * xp)
                s2 = s * s
                ss = s2 * s2
            xv = 1 if _open01(gen) <= cc else -1
            tv = T0s[j] * ss * _open01(gen)
            if store:
                present[j, i] = True
                x[j, i] = xv
                t[j, i] = tv
                phi[j, i] = p
                A[j, i] = bit
            else:
                xo[j] = 0 if xv == 1 else 1
                ko[j] = math.ceil(tv / tau)
                bo[j] = bit
        if not store and ok[0] and ok[1]:
            ca[bo[0], bo[1], xo[0], xo[1]] += 1
            if abs(ko[0] - ko[1]) < kwin:
                cw[bo[0], bo[1], xo[0], xo[1]] += 1


def _kernel_args(mode, settings1, settings2):
    variant, xi_fixed, eta1, eta2 = _mode_params(mode)
    ang = np.array(
        [settings1.a, settings1.a_prime, settings2.a, settings2.a_prime], dtype=np.float64
    )
    T0s = np.array([settings1.T0, settings2.T0], dtype=np.float64)
    return variant, xi_fixed, eta1, eta2, ang, T0s


_NO_I8 = np.zeros((2, 0), dtype=np.int8)
_NO_F8 = np.zeros((2, 0))
_NO_B = np.zeros((2, 0), dtype=np.bool_)
_NO_TALLY = np.zeros((2, 2, 2, 2), dtype=np.int64)


def simulate_tallies(mode, settings1, settings2, n_pairs, stream, kwin, tau, cw=None, ca=None):
    """Run ``n_pairs`` emissions without storing events, tallying coincidences.

    Consumes ``stream`` exactly like :func:`run_experiment`.  Returns the
    windowed and all-pairs tallies as int64 arrays indexed
    ``[A1, A2, x1 == -1, x2 == -1]``; pass existing arrays to accumulate
    into them.  ``kwin`` is the integer window ``ceil(W / tau)``.
    """
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise ConfigError("n_pairs must be >= 1")
    if cw is None:
        cw = np.zeros((2, 2, 2, 2), dtype=np.int64)
    if ca is None:
        ca = np.zeros((2, 2, 2, 2), dtype=np.int64)
    variant, xi_fixed, eta1, eta2, ang, T0s = _kernel_args(mode, settings1, settings2)
    _simulate_pairs(
        stream.generator, n_pairs, variant, xi_fixed, eta1, eta2, ang, T0s,
        _NO_I8, _NO_F8, _NO_F8, _NO_I8, _NO_B, False, int(kwin), float(tau), cw, ca,
    )
    return cw, ca


def run_experiment(mode, settings1, settings2, n_pairs, stream, emission_offset=0):
    """Simulate ``n_pairs`` emissions and return the two station logs.

    Emission indices run from ``emission_offset``.  In experiment III a photon
    discarded by its source-side polarizer leaves no record, so the two logs
    can differ in length; pairing is left to the analysis.
    """
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise ConfigError("n_pairs must be >= 1")
    variant, xi_fixed, eta1, eta2, ang, T0s = _kernel_args(mode, settings1, settings2)
    x = np.zeros((2, n_pairs), dtype=np.int8)
    t = np.zeros((2, n_pairs))
    phi = np.zeros((2, n_pairs))
    A = np.zeros((2, n_pairs), dtype=np.int8)
    present = np.zeros((2, n_pairs), dtype=np.bool_)
    _simulate_pairs(
        stream.generator, n_pairs, variant, xi_fixed, eta1, eta2, ang, T0s,
        x, t, phi, A, present, True, 1, 1.0, _NO_TALLY, _NO_TALLY,
    )
    emission = np.arange(emission_offset, emission_offset + n_pairs, dtype=np.int64)
    logs = []
    for j, st in enumerate((settings1, settings2)):
        m = present[j]
        if m.all():
            logs.append(EventLog(j + 1, emission, x[j], t[j], phi[j], A[j], T0=st.T0))
        else:
            logs.append(EventLog(j + 1, emission[m], x[j][m], t[j][m], phi[j][m], A[j][m], T0=st.T0))
    return logs[0], logs[1]
