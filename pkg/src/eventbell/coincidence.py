"""Coincidence counting and correlation estimates for two station logs.

Time tags are discretized as ``k = ceil(t / tau)``.  In emission-index mode a
record pair with the same emission index counts as a coincidence when
``|k1 - k2| < ceil(W / tau)``; the all-pairs mode drops the time tags and
counts every complete pair.  Counts are kept per setting pair ``(phi1, phi2)``.
"""

import csv
import enum
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, EmptyTableError

__all__ = [
    "Pairing",
    "AnalysisConfig",
    "CoincidenceTable",
    "CorrelationResult",
    "WindowPoint",
    "discretize",
    "window_steps",
    "count_coincidences",
    "count_all_pairs",
    "analyze",
    "correlations",
    "chsh",
    "window_sweep",
    "tables_from_tallies",
    "CORRELATION_HEADER",
    "CHSH_HEADER",
    "correlation_rows",
    "write_correlation_csv",
    "write_chsh_csv",
    "fmt",
]

CORRELATION_HEADER = ["phi1", "phi2", "W", "tau", "Cpp", "Cpm", "Cmp", "Cmm", "Nc", "E1", "E2", "E"]
CHSH_HEADER = ["a1", "a2", "a1p", "a2p", "S"]


class Pairing(enum.Enum):
    EMISSION_INDEX = "emission"
    ALL_PAIRS_NO_WINDOW = "all"


@dataclass(frozen=True)
class AnalysisConfig:
    """Time-tag resolution ``tau``, window ``W`` (defaults to ``tau``) and pairing mode."""

    tau: float = 1.0
    W: Optional[float] = None
    pairing: Pairing = Pairing.EMISSION_INDEX

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.W is None:
            object.__setattr__(self, "W", float(self.tau))
        if not isinstance(self.pairing, Pairing):
            object.__setattr__(self, "pairing", Pairing(self.pairing))
        if self.pairing is Pairing.EMISSION_INDEX and not self.W >= self.tau:
            raise ConfigError(f"window W={self.W} must be >= tau={self.tau}")


@dataclass(frozen=True)
class CorrelationResult:
    E1: float
    E2: float
    E: float
    Nc: int


@dataclass
class CoincidenceTable:
    """Coincidence counts for one setting pair.

    ``counts[i, j]`` holds C_xy with ``i = (x == -1)`` and ``j = (y == -1)``,
    so ``counts[0, 0]`` is C++ and ``counts[0, 1]`` is C+-.
    """

    settings: Tuple[float, float]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(2, 2)
        if (self.counts < 0).any():
            raise ValueError("coincidence counts must be nonnegative")

    @classmethod
    def from_counts(cls, settings, Cpp, Cpm, Cmp, Cmm):
        return cls(tuple(settings), np.array([[Cpp, Cpm], [Cmp, Cmm]]))

    Cpp = property(lambda self: int(self.counts[0, 0]))
    Cpm = property(lambda self: int(self.counts[0, 1]))
    Cmp = property(lambda self: int(self.counts[1, 0]))
    Cmm = property(lambda self: int(self.counts[1, 1]))

    @property
    def Nc(self):
        return int(self.counts.sum())

    def __add__(self, other):
        if self.settings != other.settings:
            raise ValueError("cannot add tables for different settings")
        return CoincidenceTable(self.settings, self.counts + other.counts)


def discretize(t, tau):
    """Discretized time tag ``ceil(t / tau)`` (scalar or array)."""
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if np.ndim(t) == 0:
        return int(math.ceil(t / tau))
    return np.ceil(np.asarray(t, dtype=np.float64) / tau).astype(np.int64)


def window_steps(W, tau):
    """Integer window ``ceil(W / tau)`` used in the strict test ``|k1 - k2| < k``."""
    if math.isinf(W):
        return np.iinfo(np.int64).max
    return int(math.ceil(W / tau))


def _pair_up(log1, log2):
    log1.check_indexing()
    log2.check_indexing()
    _, i1, i2 = np.intersect1d(log1.emission, log2.emission, assume_unique=True, return_indices=True)
    return i1, i2


def _tabulate(phi1, phi2, x1, x2, keep=None):
    # one table per distinct (phi1, phi2) among the complete pairs, even when
    # the window leaves it empty
    tables = {}
    if len(phi1) == 0:
        return tables
    keys, inv = np.unique(np.stack([phi1, phi2], axis=1), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    code = inv * 4 + 2 * (x1 < 0) + (x2 < 0)
    if keep is not None:
        code = code[keep]
    counts = np.bincount(code, minlength=4 * len(keys)).reshape(-1, 2, 2)
    for (p1, p2), c in zip(keys, counts):
        tables[(float(p1), float(p2))] = CoincidenceTable((float(p1), float(p2)), c)
    return tables


def count_coincidences(log1, log2, cfg):
    """Coincidence tables keyed by ``(phi1, phi2)``.

    Records are paired by emission index; an index missing from either log
    yields no pair.  With ``cfg.pairing`` set to all-pairs the window test is
    skipped, which is the same as :func:`count_all_pairs`.
    """
    i1, i2 = _pair_up(log1, log2)
    keep = None
    if cfg.pairing is Pairing.EMISSION_INDEX:
        k1 = discretize(log1.t[i1], cfg.tau)
        k2 = discretize(log2.t[i2], cfg.tau)
        keep = np.abs(k1 - k2) < window_steps(cfg.W, cfg.tau)
    return _tabulate(log1.phi[i1], log2.phi[i2], log1.x[i1], log2.x[i2], keep)


def count_all_pairs(log1, log2):
    """Tables counting every complete pair, time tags ignored."""
    return count_coincidences(log1, log2, AnalysisConfig(pairing=Pairing.ALL_PAIRS_NO_WINDOW))


def correlations(table):
    """Single-particle averages E1, E2 and the correlation E of one table."""
    Nc = table.Nc
    if Nc == 0:
        raise EmptyTableError(
            f"no coincidences for settings {table.settings}; widen W or increase N",
            settings=table.settings,
        )
    pp, pm, mp, mm = table.Cpp, table.Cpm, table.Cmp, table.Cmm
    return CorrelationResult(
        E1=(pp - mm + pm - mp) / Nc,
        E2=(pp - mm - pm + mp) / Nc,
        E=(pp + mm - pm - mp) / Nc,
        Nc=Nc,
    )


def analyze(log1, log2, cfg):
    """Map ``(phi1, phi2)`` to :class:`CorrelationResult` (or the EmptyTableError)."""
    out = {}
    for key, table in count_coincidences(log1, log2, cfg).items():
        try:
            out[key] = correlations(table)
        except EmptyTableError as exc:
            out[key] = exc
    return out


def chsh(E_ab, E_abp, E_apb, E_apbp):
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    return E_ab - E_abp + E_apb + E_apbp


@dataclass
class WindowPoint:
    W: float
    tables: Dict[Tuple[float, float], CoincidenceTable]
    results: Dict[Tuple[float, float], Union[CorrelationResult, EmptyTableError]]


def window_sweep(log1, log2, tau, W_list):
    """Correlations for each window in ``W_list`` on fixed logs.

    An empty table at some W is recorded as its :class:`EmptyTableError`
    and the sweep carries on.
    """
    W_list = list(W_list)
    if not W_list:
        raise ConfigError("W_list must be nonempty")
    i1, i2 = _pair_up(log1, log2)
    k1 = discretize(log1.t[i1], tau)
    k2 = discretize(log2.t[i2], tau)
    dk = np.abs(k1 - k2)
    out = []
    for W in W_list:
        AnalysisConfig(tau, W)  # validates W >= tau
        keep = dk < window_steps(W, tau)
        tables = _tabulate(log1.phi[i1], log2.phi[i2], log1.x[i1], log2.x[i2], keep)
        results = {}
        for key, table in tables.items():
            try:
                results[key] = correlations(table)
            except EmptyTableError as exc:
                results[key] = exc
        out.append(WindowPoint(float(W), tables, results))
    return out


def tables_from_tallies(tally, ang):
    """Convert a ``[A1, A2, x1 == -1, x2 == -1]`` tally into tables keyed by angle.

    ``ang`` is ``(a1, a1', a2, a2')``.  Bits mapping to the same angle merge.
    """
    tables = {}
    for b1 in range(2):
        for b2 in range(2):
            key = (float(ang[b1]), float(ang[2 + b2]))
            t = CoincidenceTable(key, tally[b1, b2])
            tables[key] = tables[key] + t if key in tables else t
    return tables


def fmt(v):
    """Shortest round-trip text for a float; integers stay integers."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def correlation_rows(tables, W, tau):
    """CSV rows (strings) for a table map; E fields are blank when N_c = 0."""
    rows = []
    for key in sorted(tables):
        t = tables[key]
        row = [fmt(key[0]), fmt(key[1]), fmt(float(W)), fmt(float(tau)),
               fmt(t.Cpp), fmt(t.Cpm), fmt(t.Cmp), fmt(t.Cmm), fmt(t.Nc)]
        if t.Nc:
            r = correlations(t)
            row += [fmt(r.E1), fmt(r.E2), fmt(r.E)]
        else:
            row += ["", "", ""]
        rows.append(row)
    return rows


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_correlation_csv(path, rows):
    _write(path, CORRELATION_HEADER, rows)


def write_chsh_csv(path, rows):
    """``rows`` are ``(a1, a2, a1p, a2p, S)`` tuples."""
    _write(path, CHSH_HEADER, [[fmt(v) for v in r] for r in rows])
