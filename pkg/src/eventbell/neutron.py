"""Event-by-event model of the single-neutron interferometry Bell test.

A neutron is a messenger carrying a two-component spinor ``(up, down)``.
Components act on that message one neutron at a time:

* rotations ``exp(i angle/2 sigma.n)`` model magnetic fields, the mu-metal
  spin turner (+-pi/2 about y), the spin rotator (alpha about x) and the
  spin flipper (pi about x);
* phase shifters multiply the message by ``exp(i chi)``;
* each beam splitter is a deterministic learning machine (DLM) that stores
  the last message seen on each input channel, keeps an exponentially
  smoothed record ``v`` of which channel was used, and sends the outgoing
  message through one of two output channels.

Network layout (channel numbers are the DLM's own)::

    source --ch0--> BS0 --out1 (transmitted, weight T)--> mu-metal +pi/2, chi1 --> BS1
                        --out0 (reflected, weight R)---> mu-metal -pi/2, chi0 --> BS2
    BS1, BS2: out1 leaves the interferometer, out0 continues to BS3
    BS3 inputs: ch0 from BS1, ch1 from BS2
    BS3 out0: O-beam -> [flipper] -> spin rotator(alpha) -> analyzer -> counter
    BS3 out1: H-beam counter

With this layout the O-beam rate follows ``T R^2 [1 + cos(alpha + chi)]``
with ``chi = chi0 - chi1`` once the DLMs have adapted.
"""

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numba
import numpy as np

from .errors import ConfigError, DegenerateNormError, EventBellError

__all__ = [
    "NeutronMessage",
    "DlmBeamSplitter",
    "InterferometerConfig",
    "RunCounts",
    "RandomChiResult",
    "spin_up_message",
    "rotate_about_axis",
    "mu_metal",
    "phase_shift",
    "spin_rotator",
    "analyzer_passes",
    "dlm_absorb",
    "dlm_emit",
    "dlm_emit_rule",
    "default_warmup",
    "run_interferometer",
    "run_interferometer_reference",
    "correlation_runs",
    "correlation_from_counts",
    "measure_correlation",
    "chsh_combination",
    "chsh_neutron",
    "random_chi_run",
    "NEUTRON_HEADER",
    "NEUTRON_CHSH_HEADER",
]

NEUTRON_HEADER = ["alpha", "chi", "N_O_up", "N_H", "N_lost", "E"]
NEUTRON_CHSH_HEADER = ["alpha", "chi", "alphap", "chip", "S", "sign_convention"]

# wiring constants
EXIT_CHANNEL = 1  # BS1/BS2 output that leaves the interferometer
O_BEAM_CHANNEL = 0  # BS3 output carrying the O-beam
_NORM_EPS = 1e-15


@dataclass(frozen=True)
class NeutronMessage:
    """Two complex amplitudes ``(amp_up, amp_down)`` of unit norm."""

    amp_up: complex
    amp_down: complex

    @property
    def norm2(self):
        a, b = self.amp_up, self.amp_down
        return a.real * a.real + a.imag * a.imag + b.real * b.real + b.imag * b.imag

    def moment(self):
        """Magnetic-moment direction (cos d sin th, sin d sin th, cos th), d = psi1 - psi2."""
        a, b = self.amp_up, self.amp_down
        w = a * b.conjugate()
        return np.array([2.0 * w.real, 2.0 * w.imag, abs(a) ** 2 - abs(b) ** 2])


def spin_up_message():
    return NeutronMessage(1.0 + 0j, 0j)


def _apply(u, m00, m01, m10, m11):
    a, b = u.amp_up, u.amp_down
    return NeutronMessage(m00 * a + m01 * b, m10 * a + m11 * b)


def rotate_about_axis(u, axis, angle):
    """Apply ``exp(i angle/2 sigma.axis)``; ``axis`` must be a unit 3-vector."""
    nx, ny, nz = (float(c) for c in axis)
    if abs(nx * nx + ny * ny + nz * nz - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be normalized, got {axis}")
    c = math.cos(0.5 * angle)
    s = math.sin(0.5 * angle)
    return _apply(
        u,
        complex(c, s * nz),
        complex(s * ny, s * nx),
        complex(-s * ny, s * nx),
        complex(c, -s * nz),
    )


def mu_metal(u, path):
    """Spin turner: +pi/2 about y on the H path, -pi/2 on the O path."""
    if path == "H":
        return rotate_about_axis(u, (0.0, 1.0, 0.0), 0.5 * math.pi)
    if path == "O":
        return rotate_about_axis(u, (0.0, 1.0, 0.0), -0.5 * math.pi)
    raise ValueError(f"path must be 'H' or 'O', got {path!r}")


def phase_shift(u, chi):
    e = complex(math.cos(chi), math.sin(chi))
    return NeutronMessage(u.amp_up * e, u.amp_down * e)


def spin_rotator(u, alpha):
    """Rotation by ``alpha`` about x; ``alpha = pi`` is the spin flipper."""
    return rotate_about_axis(u, (1.0, 0.0, 0.0), alpha)


def analyzer_passes(u, r):
    """Spin analyzer: pass iff ``(1 + m_z) / 2 > r``."""
    a, b = u.amp_up, u.amp_down
    mz = (a.real * a.real + a.imag * a.imag) - (b.real * b.real + b.imag * b.imag)
    return 0.5 * (1.0 + mz) > r


@dataclass
class DlmBeamSplitter:
    """Adaptive beam splitter: registers ``reg[channel] = (up, down)`` and vector ``v``."""

    R: float
    gamma: float
    reg: np.ndarray = field(default_factory=lambda: np.array([[1, 0], [1, 0]], dtype=complex))
    v: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))

    def __post_init__(self):
        if not 0.0 < self.R < 1.0:
            raise ConfigError(f"R must lie in (0, 1), got {self.R}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        self.reg = np.array(self.reg, dtype=complex).reshape(2, 2)
        self.v = np.array(self.v, dtype=float).reshape(2)

    @classmethod
    def random(cls, R, gamma, stream):
        """Random initial state: v0, then (theta, psi1, psi2) for each register."""
        bs = cls(R, gamma)
        v0 = stream.generator.random()
        bs.v[:] = (v0, 1.0 - v0)
        for ch in range(2):
            th = math.pi * stream.generator.random()
            p1 = 2.0 * math.pi * stream.generator.random()
            p2 = 2.0 * math.pi * stream.generator.random()
            bs.reg[ch, 0] = complex(math.cos(p1), math.sin(p1)) * math.cos(0.5 * th)
            bs.reg[ch, 1] = complex(math.cos(p2), math.sin(p2)) * math.sin(0.5 * th)
        return bs

    def absorb(self, channel, u):
        self.reg[channel, 0] = u.amp_up
        self.reg[channel, 1] = u.amp_down
        g = self.gamma
        q0 = 1.0 if channel == 0 else 0.0
        self.v[0] = g * self.v[0] + (1.0 - g) * q0
        self.v[1] = g * self.v[1] + (1.0 - g) * (1.0 - q0)
        return self

    def outputs(self):
        """The four numbers (h0, h1, h2, h3) for the current state."""
        sT = math.sqrt(1.0 - self.R)
        sR = math.sqrt(self.R)
        s0 = math.sqrt(self.v[0])
        s1 = math.sqrt(self.v[1])
        a0, a1 = complex(self.reg[0, 0]) * s0, complex(self.reg[1, 0]) * s1
        b0, b1 = complex(self.reg[0, 1]) * s0, complex(self.reg[1, 1]) * s1
        iR = complex(0.0, sR)
        return (sT * a0 + iR * a1, iR * a0 + sT * a1, sT * b0 + iR * b1, iR * b0 + sT * b1)

    def emit_rule(self, r):
        h0, h1, h2, h3 = self.outputs()
        p1 = _abs2(h0) + _abs2(h2)
        if p1 > r:
            ch, n2, a, b = 1, p1, h0, h2
        else:
            ch, n2, a, b = 0, _abs2(h1) + _abs2(h3), h1, h3
        if n2 < _NORM_EPS * _NORM_EPS:
            raise DegenerateNormError(f"selected beam-splitter output has norm {math.sqrt(n2)}")
        nn = math.sqrt(n2)
        return ch, NeutronMessage(a / nn, b / nn)

    def emit(self, stream):
        return self.emit_rule(stream.uniform_open())


def _abs2(z):
    return z.real * z.real + z.imag * z.imag


def dlm_absorb(bs, channel, u):
    """Copy ``u`` into the register of ``channel`` and update ``v`` (in place)."""
    return bs.absorb(channel, u)


def dlm_emit(bs, stream):
    """Draw r and return ``(out_channel, message)``."""
    return bs.emit(stream)


def dlm_emit_rule(bs, r):
    return bs.emit_rule(r)


@dataclass(frozen=True)
class InterferometerConfig:
    """Settings of one interferometer run.

    ``n_warmup`` neutrons pass through the network before counting starts
    so the beam splitters forget their random initial state; ``None`` picks
    :func:`default_warmup`.
    """

    chi0: float = 0.0
    chi1: float = 0.0
    alpha: float = 0.0
    flipper_on: bool = False
    gamma: float = 0.99
    R: float = 0.2
    n_per_setting: int = 10_000
    n_warmup: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.R < 1.0:
            raise ConfigError(f"R must lie in (0, 1), got {self.R}")
        if int(self.n_per_setting) < 1:
            raise ConfigError("n_per_setting must be >= 1")
        if self.n_warmup is not None and int(self.n_warmup) < 0:
            raise ConfigError("n_warmup must be >= 0")

    @property
    def chi(self):
        return self.chi0 - self.chi1

    @property
    def warmup(self):
        return default_warmup(self.gamma, self.R) if self.n_warmup is None else int(self.n_warmup)

    def with_setting(self, alpha, chi):
        """Copy with spin-rotator ``alpha`` and ``chi0 = chi1 + chi``."""
        return replace(self, alpha=float(alpha), chi0=self.chi1 + float(chi))


def default_warmup(gamma, R):
    """About ten memory times of the least-visited beam splitter."""
    return int(math.ceil(10.0 / ((1.0 - gamma) * R)))


class RunCounts(NamedTuple):
    N_O_up: int
    N_O_rejected: int
    N_H: int
    N_lost: int

    @property
    def total(self):
        return self.N_O_up + self.N_O_rejected + self.N_H + self.N_lost


# --- reference path -------------------------------------------------------------


def _init_network(cfg, init_stream):
    return [DlmBeamSplitter.random(cfg.R, cfg.gamma, init_stream) for _ in range(4)]


def _network_step(bss, cfg, chi0, stream):
    """Route one neutron; returns 'up', 'rejected', 'H' or 'lost'."""
    bs0, bs1, bs2, bs3 = bss
    bs0.absorb(0, spin_up_message())
    out, u = bs0.emit(stream)
    if out == 1:
        u = phase_shift(mu_metal(u, "H"), cfg.chi1)
        arm, bs = 0, bs1
    else:
        u = phase_shift(mu_metal(u, "O"), chi0)
        arm, bs = 1, bs2
    bs.absorb(0, u)
    out, u = bs.emit(stream)
    if out == EXIT_CHANNEL:
        return "lost"
    bs3.absorb(arm, u)
    out, u = bs3.emit(stream)
    if out != O_BEAM_CHANNEL:
        return "H"
    if cfg.flipper_on:
        u = spin_rotator(u, math.pi)
    u = spin_rotator(u, cfg.alpha)
    return "up" if analyzer_passes(u, stream.uniform_open()) else "rejected"


def run_interferometer_reference(cfg, stream, init_stream=None):
    """Pure-Python version of :func:`run_interferometer` built from the component objects."""
    if init_stream is None:
        init_stream = stream.substream("dlm")
    events = stream.substream("events")
    bss = _init_network(cfg, init_stream)
    tally = {"up": 0, "rejected": 0, "H": 0, "lost": 0}
    for i in range(cfg.warmup + int(cfg.n_per_setting)):
        res = _network_step(bss, cfg, cfg.chi0, events)
        if i >= cfg.warmup:
            tally[res] += 1
    return RunCounts(tally["up"], tally["rejected"], tally["H"], tally["lost"])


# --- compiled kernel ------------------------------------------------------------


@numba.njit(cache=True)
def _open01(gen):
    r = gen.random()
    while r == 0.0:
        r = gen.random()
    return r


@numba.njit(cache=True)
def _init_state(gen, v, reg):
    for b in range(4):
        v0 = gen.random()
        v[b, 0] = v0
        v[b, 1] = 1.0 - v0
        for ch in range(2):
            th = math.pi * gen.random()
            p1 = 2.0 * math.pi * gen.random()
            p2 = 2.0 * math.pi * gen.random()
            reg[b, ch, 0] = complex(math.cos(p1), math.sin(p1)) * math.cos(0.5 * th)
            reg[b, ch, 1] = complex(math.cos(p2), math.sin(p2)) * math.sin(0.5 * th)


@numba.njit(cache=True)
def _rot(a, b, c, s, nx, ny, nz):
    m00 = complex(c, s * nz)
    m01 = complex(s * ny, s * nx)
    m10 = complex(-s * ny, s * nx)
    m11 = complex(c, -s * nz)
    return m00 * a + m01 * b, m10 * a + m11 * b


@numba.njit(cache=True)
def _bs(gen, v, reg, b, ch, a_up, a_dn, gamma, sT, sR):
    # absorb on channel ch, then emit; returns (out, up, down, status)
    reg[b, ch, 0] = a_up
    reg[b, ch, 1] = a_dn
    q0 = 1.0 if ch == 0 else 0.0
    v[b, 0] = gamma * v[b, 0] + (1.0 - gamma) * q0
    v[b, 1] = gamma * v[b, 1] + (1.0 - gamma) * (1.0 - q0)
    s0 = math.sqrt(v[b, 0])
    s1 = math.sqrt(v[b, 1])
    a0 = reg[b, 0, 0] * s0
    a1 = reg[b, 1, 0] * s1
    b0 = reg[b, 0, 1] * s0
    b1 = reg[b, 1, 1] * s1
    iR = complex(0.0, sR)
    h0 = sT * a0 + iR * a1
    h1 = iR * a0 + sT * a1
    h2 = sT * b0 + iR * b1
    h3 = iR * b0 + sT * b1
    p1 = (h0.real * h0.real + h0.imag * h0.imag) + (h2.real * h2.real + h2.imag * h2.imag)
    r = _open01(gen)
    if p1 > r:
        out = 1
        n2 = p1
        x, y = h0, h2
    else:
        out = 0
        n2 = (h1.real * h1.real + h1.imag * h1.imag) + (h3.real * h3.real + h3.imag * h3.imag)
        x, y = h1, h3
    if n2 < 1e-30:
        return out, x, y, False
    nn = math.sqrt(n2)
    return out, x / nn, y / nn, True


@numba.njit(cache=True)
def _run_network(gen, v, reg, n_skip, n, alpha, flip, chi0s, chi1, gamma, R, cnt):
    # cnt[k, :] = (up, rejected, H, lost) for chi bin k; with several chi0s
    # each neutron first draws its bin.  Returns False on a degenerate output.
    sT = math.sqrt(1.0 - R)
    sR = math.sqrt(R)
    cq = math.cos(0.25 * math.pi)
    sq = math.sin(0.25 * math.pi)
    ca = math.cos(0.5 * alpha)
    sa = math.sin(0.5 * alpha)
    cf = math.cos(0.5 * math.pi)
    sf = math.sin(0.5 * math.pi)
    e1 = complex(math.cos(chi1), math.sin(chi1))
    nchi = chi0s.shape[0]
    e0s = np.empty(nchi, dtype=np.complex128)
    for k in range(nchi):
        e0s[k] = complex(math.cos(chi0s[k]), math.sin(chi0s[k]))
    for i in range(n_skip + n):
        k = 0
        if nchi > 1:
            k = int(gen.random() * nchi)
        out, u, d, ok = _bs(gen, v, reg, 0, 0, 1.0 + 0j, 0j, gamma, sT, sR)
        if not ok:
            return False
        if out == 1:
            u, d = _rot(u, d, cq, sq, 0.0, 1.0, 0.0)
            u = u * e1
            d = d * e1
            arm = 0
        else:
            u, d = _rot(u, d, cq, -sq, 0.0, 1.0, 0.0)
            u = u * e0s[k]
            d = d * e0s[k]
            arm = 1
        out, u, d, ok = _bs(gen, v, reg, 1 + arm, 0, u, d, gamma, sT, sR)
        if not ok:
            return False
        if out == 1:
            res = 3
        else:
            out, u, d, ok = _bs(gen, v, reg, 3, arm, u, d, gamma, sT, sR)
            if not ok:
                return False
            if out != 0:
                res = 2
            else:
                if flip:
                    u, d = _rot(u, d, cf, sf, 1.0, 0.0, 0.0)
                u, d = _rot(u, d, ca, sa, 1.0, 0.0, 0.0)
                mz = (u.real * u.real + u.imag * u.imag) - (d.real * d.real + d.imag * d.imag)
                res = 0 if 0.5 * (1.0 + mz) > _open01(gen) else 1
        if i >= n_skip:
            cnt[k, res] += 1
    return True


def _kernel_run(cfg, stream, init_stream, chi0s):
    v = np.empty((4, 2))
    reg = np.empty((4, 2, 2), dtype=np.complex128)
    _init_state(init_stream.generator, v, reg)
    chi0s = np.asarray(chi0s, dtype=np.float64).reshape(-1)
    cnt = np.zeros((len(chi0s), 4), dtype=np.int64)
    ok = _run_network(
        stream.generator, v, reg, cfg.warmup, int(cfg.n_per_setting),
        float(cfg.alpha), bool(cfg.flipper_on), chi0s, float(cfg.chi1),
        float(cfg.gamma), float(cfg.R), cnt,
    )
    if not ok:
        raise DegenerateNormError("beam-splitter output with vanishing norm")
    return cnt


def run_interferometer(cfg, stream, init_stream=None):
    """Send ``cfg.n_per_setting`` neutrons (after the warmup) through the network.

    The beam splitters start from random states drawn from ``init_stream``
    (default ``stream.substream("dlm")``); event draws use
    ``stream.substream("events")``.
    """
    if init_stream is None:
        init_stream = stream.substream("dlm")
    cnt = _kernel_run(cfg, stream.substream("events"), init_stream, [cfg.chi0])
    return RunCounts(*(int(c) for c in cnt[0]))


def _flip_settings(alpha, chi):
    p = math.pi
    return [(alpha, chi), (alpha + p, chi + p), (alpha + p, chi), (alpha, chi + p)]


def correlation_runs(alpha, chi, cfg, stream):
    """The four runs entering E(alpha, chi).

    Settings are (a, c), (a+pi, c+pi), (a+pi, c), (a, c+pi).  All four start
    from the same beam-splitter state (``stream.substream("dlm")``) and use
    their own event substream.
    """
    out = []
    for k, (a, c) in enumerate(_flip_settings(alpha, chi)):
        out.append(
            run_interferometer(
                cfg.with_setting(a, c), stream.substream(f"run{k}"), stream.substream("dlm")
            )
        )
    return out


def correlation_from_counts(counts, beam="O"):
    """Combine four runs: (N1 + N2 - N3 - N4) / (N1 + N2 + N3 + N4)."""
    idx = {"O": 0, "H": 2}[beam]
    n = [c[idx] for c in counts]
    tot = sum(n)
    if tot == 0:
        raise EventBellError("all four counts are zero; correlation undefined")
    return (n[0] + n[1] - n[2] - n[3]) / tot


def measure_correlation(alpha, chi, cfg, stream, beam="O"):
    return correlation_from_counts(correlation_runs(alpha, chi, cfg, stream), beam)


def chsh_combination(E_ac, E_acp, E_apc, E_apcp, sign_convention="neutron"):
    """CHSH combination of E(a,c), E(a,c'), E(a',c), E(a',c').

    ``"neutron"``: E(a,c) + E(a,c') - E(a',c) + E(a',c').
    ``"bell"``: E(a,c) - E(a,c') + E(a',c) + E(a',c').
    """
    if sign_convention == "neutron":
        return E_ac + E_acp - E_apc + E_apcp
    if sign_convention == "bell":
        return E_ac - E_acp + E_apc + E_apcp
    raise ValueError(f"unknown sign convention {sign_convention!r}")


def chsh_neutron(alpha, chi, alpha_p, chi_p, cfg, stream, sign_convention="neutron"):
    """Measure the four correlations and return the CHSH value ``S``."""
    Es = [
        measure_correlation(a, c, cfg, stream.substream(f"E{k}"))
        for k, (a, c) in enumerate([(alpha, chi), (alpha, chi_p), (alpha_p, chi), (alpha_p, chi_p)])
    ]
    return chsh_combination(*Es, sign_convention=sign_convention)


@dataclass
class RandomChiResult:
    alpha: float
    chi_set: np.ndarray
    counts: np.ndarray  # (2, len(chi_set), 4): runs at alpha and alpha + pi
    E: np.ndarray  # per chi; nan where chi + pi is not in the set


def _match(chi_set, target):
    d = np.abs(np.angle(np.exp(1j * (np.asarray(chi_set) - target))))
    k = int(np.argmin(d))
    return k if d[k] < 1e-9 else -1


def random_chi_run(alpha, chi_set, cfg, stream):
    """Runs at ``alpha`` and ``alpha + pi`` with chi drawn per neutron from ``chi_set``.

    The random phase is applied by the chi0 shifter (``chi0 = chi1 + chi``).
    Counts are binned by the drawn chi, and E(alpha, chi) is formed from
    the bins of chi and chi + pi.
    """
    chi_set = np.asarray(chi_set, dtype=np.float64).reshape(-1)
    if chi_set.size == 0:
        raise ConfigError("chi_set must be nonempty")
    counts = np.stack([
        _kernel_run(
            replace(cfg, alpha=float(a)),
            stream.substream(f"run{j}").substream("events"),
            stream.substream("dlm"),
            cfg.chi1 + chi_set,
        )
        for j, a in enumerate((alpha, alpha + math.pi))
    ])
    E = np.full(chi_set.size, np.nan)
    for k, c in enumerate(chi_set):
        kp = _match(chi_set, c + math.pi)
        if kp < 0:
            continue
        n = [counts[0, k, 0], counts[1, kp, 0], counts[1, k, 0], counts[0, kp, 0]]
        if sum(n):
            E[k] = (n[0] + n[1] - n[2] - n[3]) / sum(n)
    return RandomChiResult(float(alpha), chi_set, counts, E)
