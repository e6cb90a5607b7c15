"""Run orchestration: simulations, reports, oracle tables and sweeps.

Every run derives its random streams from ``RngStream(cfg.seed)``:
photon setting ``k`` of experiment ``X`` uses ``substream(X).substream("setting{k}")``,
neutron grid point ``k`` the same labels, and the CHSH measurements
``substream(X).substream("chsh")``.  Rerunning a config therefore
reproduces every output byte for byte.
"""

import math
import os
from dataclasses import dataclass, replace
from typing import Dict, List

import numpy as np

from . import coincidence as co
from . import neutron as ne
from . import oracle
from .config import RunConfig
from .errors import ConfigError, EmptyTableError, EventBellError
from .photon import (
    ExperimentI,
    ExperimentII,
    ExperimentIII,
    StationSettings,
    read_log,
    run_experiment,
    simulate_tallies,
    write_logs,
)
from .rng import RngStream

__all__ = [
    "photon_mode",
    "photon_oracle",
    "PhotonPoint",
    "photon_point",
    "photon_points",
    "neutron_config",
    "neutron_grid",
    "random_chi_grid",
    "fit_amplitude",
    "grid_chsh_max",
    "run",
    "oracle_report",
    "sweep",
    "analyze_logs",
    "SWEEPABLE",
    "COMPARISON_PHOTON",
    "COMPARISON_NEUTRON",
]

INF = math.inf
COMPARISON_PHOTON = ["phi1", "phi2", "W", "E_sim", "E_oracle", "abs_dev"]
COMPARISON_NEUTRON = ["alpha", "chi", "E_sim", "E_oracle", "abs_dev"]
SWEEPABLE = {
    "phi": "photon",
    "W": "photon",
    "eta": "photon",
    "gamma": "neutron",
    "alpha": "neutron",
    "chi": "neutron",
}

_CHUNK = 1 << 22
# an adaptive point with no windowed coincidence after this many pairs is
# reported as empty instead of running to the pair cap
_ZERO_STOP = 10_000_000


# --- output helpers -----------------------------------------------------------


def _write_csv(path, header, rows):
    """Write atomically: a temporary file renamed into place."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    os.replace(tmp, path)


def _f(v):
    return "" if v is None else co.fmt(v)


# --- photon experiments -----------------------------------------------------------


def photon_mode(cfg):
    if cfg.experiment == "photon_I":
        return ExperimentI()
    if cfg.experiment == "photon_II":
        return ExperimentII(cfg.eta1)
    if cfg.experiment == "photon_III":
        return ExperimentIII(cfg.eta1, cfg.eta2)
    raise ConfigError(f"{cfg.experiment} is not a photon experiment")


def photon_oracle(cfg, phi1, phi2, windowed=True):
    """Reference (E1, E2, E) for a photon setting.

    Experiment I: the singlet values with a window, and ``-cos 2(phi1-phi2) / 2``
    without one.  Experiments II and III: the product-state values in both
    analysis modes.
    """
    if cfg.experiment == "photon_I":
        if windowed:
            return oracle.photon_singlet(phi1, phi2)
        return 0.0, 0.0, -0.5 * math.cos(2 * (phi1 - phi2))
    zeta2 = cfg.eta1 + math.pi / 2 if cfg.experiment == "photon_II" else cfg.eta2
    return oracle.photon_product(cfg.eta1, zeta2, phi1, phi2)


@dataclass
class PhotonPoint:
    """Tables for one station-settings pair, keyed by W (``inf``: all pairs)."""

    settings: tuple
    tables: Dict[float, dict]
    n_pairs: int

    def result(self, W, key=None):
        tabs = self.tables[W]
        if key is None:
            (key,) = tabs.keys()
        return co.correlations(tabs[key])


def _settings_list(cfg):
    if cfg.phi:
        return [
            (StationSettings(p, p, cfg.T0), StationSettings(cfg.phi2, cfg.phi2, cfg.T0))
            for p in cfg.phi
        ]
    return [(StationSettings(cfg.a1, cfg.a1p, cfg.T0), StationSettings(cfg.a2, cfg.a2p, cfg.T0))]


def _save_logs(cfg):
    if cfg.save_logs == "true":
        if cfg.min_coincidences:
            raise ConfigError("adaptive runs (min_coincidences > 0) cannot save event logs")
        return True
    return cfg.save_logs == "auto" and not cfg.phi and not cfg.min_coincidences


def photon_point(cfg, s1, s2, stream, log_prefix=None):
    """Simulate one settings pair and tabulate every analysis mode.

    With ``log_prefix`` the event logs are written and analyzed.  Otherwise,
    for a single window, coincidences are tallied on the fly in chunks; the
    stream is consumed identically, so the tables are the same.  With
    ``cfg.min_coincidences > 0`` chunks continue until every setting pair
    has that many windowed coincidences (or ``cfg.max_pairs`` is reached).
    """
    mode = photon_mode(cfg)
    ang = (s1.a, s1.a_prime, s2.a, s2.a_prime)
    if log_prefix is not None or len(cfg.W) > 1:
        l1, l2 = run_experiment(mode, s1, s2, cfg.n_pairs, stream)
        if log_prefix is not None:
            write_logs(log_prefix, l1, l2)
        tables = {wp.W: wp.tables for wp in co.window_sweep(l1, l2, cfg.tau, cfg.W)}
        tables[INF] = co.count_all_pairs(l1, l2)
        return PhotonPoint((s1, s2), tables, cfg.n_pairs)

    W = cfg.W[0]
    kwin = co.window_steps(W, cfg.tau)
    cw = np.zeros((2, 2, 2, 2), dtype=np.int64)
    ca = np.zeros((2, 2, 2, 2), dtype=np.int64)
    target = cfg.min_coincidences
    cap = cfg.max_pairs if cfg.max_pairs else None
    done = 0
    while True:
        if target:
            n = _CHUNK if cap is None else min(_CHUNK, cap - done)
        else:
            n = min(_CHUNK, cfg.n_pairs - done)
        if n <= 0:
            break
        simulate_tallies(mode, s1, s2, n, stream, kwin, cfg.tau, cw, ca)
        done += n
        if not target:
            continue
        nc = min(t.Nc for t in co.tables_from_tallies(cw, ang).values())
        if nc >= target or (nc == 0 and done >= _ZERO_STOP):
            break
    tables = {W: co.tables_from_tallies(cw, ang), INF: co.tables_from_tallies(ca, ang)}
    return PhotonPoint((s1, s2), tables, done)


def photon_points(cfg, out_dir=None, stream=None):
    """All settings pairs of a photon config (phi grid or the four CHSH settings)."""
    root = stream if stream is not None else RngStream(cfg.seed).substream(cfg.experiment)
    save = _save_logs(cfg) and out_dir is not None
    points = []
    settings = _settings_list(cfg)
    for k, (s1, s2) in enumerate(settings):
        prefix = None
        if save:
            name = "run" if len(settings) == 1 else f"phi{k:02d}"
            prefix = os.path.join(out_dir, name)
        points.append(photon_point(cfg, s1, s2, root.substream(f"setting{k}"), prefix))
    return points


def _wkeys(point):
    return sorted(point.tables)  # finite windows first, inf last


def _photon_rows(cfg, points):
    corr, comp = [], []
    for pt in points:
        for W in _wkeys(pt):
            tabs = pt.tables[W]
            corr += co.correlation_rows(tabs, W, cfg.tau)
            for key in sorted(tabs):
                E_or = photon_oracle(cfg, key[0], key[1], windowed=not math.isinf(W))[2]
                try:
                    E = co.correlations(tabs[key]).E
                    comp.append([_f(key[0]), _f(key[1]), _f(W), _f(E), _f(E_or), _f(abs(E - E_or))])
                except EmptyTableError:
                    comp.append([_f(key[0]), _f(key[1]), _f(W), "", _f(E_or), ""])
    return corr, comp


def _photon_chsh(cfg, point):
    """CHSH value per W for a four-setting run (None where a table is empty)."""
    a1, a1p, a2, a2p = cfg.a1, cfg.a1p, cfg.a2, cfg.a2p
    out = {}
    for W in _wkeys(point):
        tabs = point.tables[W]
        try:
            Es = [co.correlations(tabs[(x, y)]).E for x, y in ((a1, a2), (a1, a2p), (a1p, a2), (a1p, a2p))]
            out[W] = co.chsh(*Es)
        except (EmptyTableError, KeyError):
            out[W] = None
    return out


def _summarize_comparison(comp, wcol=2):
    summary = {}
    for row in comp:
        if row[-1] == "":
            summary.setdefault(row[wcol], []).append(math.nan)
        else:
            summary.setdefault(row[wcol], []).append(float(row[-1]))
    return {
        W: {"max_abs_dev": float(np.max(v)), "mean_abs_dev": float(np.mean(v)), "n": len(v)}
        for W, v in summary.items()
    }


def _run_photon(cfg, out_dir):
    points = photon_points(cfg, out_dir)
    corr, comp = _photon_rows(cfg, points)
    _write_csv(os.path.join(out_dir, "correlations.csv"), co.CORRELATION_HEADER, corr)
    _write_csv(os.path.join(out_dir, "comparison.csv"), COMPARISON_PHOTON, comp)
    report = {"comparison": _summarize_comparison(comp)}
    if not cfg.phi:
        S = _photon_chsh(cfg, points[0])
        report["chsh"] = S
        for W, s in S.items():
            if math.isinf(W):
                name = "chsh_all_pairs.csv"
            elif W == cfg.W[0]:
                name = "chsh.csv"
            else:
                name = f"chsh_W={co.fmt(W)}.csv"
            _write_csv(
                os.path.join(out_dir, name), co.CHSH_HEADER,
                [[_f(cfg.a1), _f(cfg.a2), _f(cfg.a1p), _f(cfg.a2p), _f(s)]],
            )
    return report


# --- neutron experiments ------------------------------------------------------------


def neutron_config(cfg):
    return ne.InterferometerConfig(
        chi1=cfg.chi1, flipper_on=cfg.flipper, gamma=cfg.gamma, R=cfg.R,
        n_per_setting=cfg.n_per_setting, n_warmup=cfg.n_warmup,
    )


def neutron_grid(cfg, stream=None):
    """Run the four-run correlation measurement on the (alpha, chi) grid.

    Returns a list of ``(alpha, chi, counts, E)`` with ``counts`` the four
    :class:`RunCounts`.
    """
    root = stream if stream is not None else RngStream(cfg.seed).substream(cfg.experiment)
    icfg = neutron_config(cfg)
    out = []
    k = 0
    for a in cfg.alpha:
        for c in cfg.chi:
            counts = ne.correlation_runs(a, c, icfg, root.substream(f"setting{k}"))
            out.append((a, c, counts, ne.correlation_from_counts(counts)))
            k += 1
    return out


def chsh_settings(cfg):
    if cfg.chsh_settings:
        return tuple(cfg.chsh_settings)
    return oracle.chsh_bound_settings()[0]


def _oracle_chsh(settings, sign):
    E = oracle.neutron_correlation
    a, c, ap, cp = settings
    return ne.chsh_combination(E(a, c), E(a, cp), E(ap, c), E(ap, cp), sign)


def _run_neutron(cfg, out_dir):
    grid = neutron_grid(cfg)
    rows, comp = [], []
    for a, c, counts, E in grid:
        N = counts[0]
        rows.append([_f(a), _f(c), _f(N.N_O_up), _f(N.N_H), _f(N.N_lost), _f(E)])
        E_or = float(oracle.neutron_correlation(a, c))
        comp.append([_f(a), _f(c), _f(E), _f(E_or), _f(abs(E - E_or))])
    _write_csv(os.path.join(out_dir, "neutron.csv"), ne.NEUTRON_HEADER, rows)
    _write_csv(os.path.join(out_dir, "comparison.csv"), COMPARISON_NEUTRON, comp)
    st = chsh_settings(cfg)
    root = RngStream(cfg.seed).substream(cfg.experiment)
    S = ne.chsh_neutron(*st, neutron_config(cfg), root.substream("chsh"), cfg.sign_convention)
    _write_csv(
        os.path.join(out_dir, "neutron_chsh.csv"), ne.NEUTRON_CHSH_HEADER,
        [[*(_f(x) for x in st), _f(S), cfg.sign_convention]],
    )
    return {
        "comparison": _neutron_summary(comp),
        "chsh": {"settings": st, "S": S, "S_oracle": _oracle_chsh(st, cfg.sign_convention)},
    }


def _neutron_summary(comp):
    d = np.array([float(r[-1]) for r in comp])
    return {"max_abs_dev": float(d.max()), "mean_abs_dev": float(d.mean()), "n": len(d)}


def fit_amplitude(E, C):
    """Least-squares amplitude ``k`` of ``E ~ k C`` (nan entries ignored)."""
    E = np.asarray(E, dtype=float)
    C = np.asarray(C, dtype=float)
    m = np.isfinite(E)
    return float((E[m] * C[m]).sum() / (C[m] * C[m]).sum())


def grid_chsh_max(E, sign="neutron"):
    """Largest CHSH combination of a measured ``E[alpha_index, chi_index]`` matrix.

    Returns ``(S, (ia, ic, iap, icp))``; settings with undefined E are skipped.
    """
    E = np.asarray(E, dtype=float)
    S = _grid_S(E, sign)
    S = np.where(np.isfinite(S), S, -np.inf)
    idx = np.unravel_index(int(np.argmax(S)), S.shape)
    return float(S[idx]), tuple(int(i) for i in idx)


def _grid_S(E, sign):
    # S[a, c, a', c'] from E(a,c), E(a,c'), E(a',c), E(a',c')
    E_ac = E[:, :, None, None]
    E_acp = E[:, None, None, :]
    E_apc = E.T[None, :, :, None]
    E_apcp = E[None, None, :, :]
    return ne.chsh_combination(E_ac, E_acp, E_apc, E_apcp, sign)


def random_chi_grid(cfg, stream=None):
    """Random-chi runs for each alpha; returns ``(E, results)`` with ``E[alpha, chi]``."""
    root = stream if stream is not None else RngStream(cfg.seed).substream(cfg.experiment)
    icfg = neutron_config(cfg)
    res = [ne.random_chi_run(a, cfg.chi, icfg, root.substream(f"setting{i}")) for i, a in enumerate(cfg.alpha)]
    return np.array([r.E for r in res]), res


def _run_random_chi(cfg, out_dir):
    E, res = random_chi_grid(cfg)
    rows, comp = [], []
    for i, r in enumerate(res):
        for k, c in enumerate(r.chi_set):
            N = r.counts[0, k]
            e = E[i, k]
            rows.append([_f(r.alpha), _f(float(c)), _f(int(N[0])), _f(int(N[2])), _f(int(N[3])),
                         "" if np.isnan(e) else _f(float(e))])
            E_or = float(oracle.neutron_correlation(r.alpha, c))
            if np.isnan(e):
                comp.append([_f(r.alpha), _f(float(c)), "", _f(E_or), ""])
            else:
                comp.append([_f(r.alpha), _f(float(c)), _f(float(e)), _f(E_or), _f(abs(e - E_or))])
    _write_csv(os.path.join(out_dir, "neutron.csv"), ne.NEUTRON_HEADER, rows)
    _write_csv(os.path.join(out_dir, "comparison.csv"), COMPARISON_NEUTRON, comp)
    alphas = np.asarray(cfg.alpha)
    chis = np.asarray(cfg.chi)
    C = np.cos(alphas[:, None] + chis[None, :])
    amp = fit_amplitude(E, C)
    S, (ia, ic, iap, icp) = grid_chsh_max(E, cfg.sign_convention)
    st = (alphas[ia], chis[ic], alphas[iap], chis[icp])
    _write_csv(
        os.path.join(out_dir, "neutron_chsh.csv"), ne.NEUTRON_CHSH_HEADER,
        [[*(_f(float(x)) for x in st), _f(S), cfg.sign_convention]],
    )
    return {"amplitude": amp, "chsh": {"settings": tuple(float(x) for x in st), "S": S}}


# --- entry points ---------------------------------------------------------------------


def run(cfg, out_dir):
    """Execute ``cfg`` and write its reports into ``out_dir``; returns a summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    if cfg.is_photon:
        return _run_photon(cfg, out_dir)
    if cfg.experiment == "neutron":
        return _run_neutron(cfg, out_dir)
    return _run_random_chi(cfg, out_dir)


def oracle_report(cfg, out_dir):
    """Write the theory values in the simulation's CSV schemas."""
    os.makedirs(out_dir, exist_ok=True)
    if cfg.is_photon:
        keys = (
            [(p, cfg.phi2) for p in cfg.phi]
            if cfg.phi
            else [(x, y) for x in (cfg.a1, cfg.a1p) for y in (cfg.a2, cfg.a2p)]
        )
        keys = sorted(set(keys))
        rows = []
        for W in sorted(cfg.W) + [INF]:
            for k in keys:
                E1, E2, E = photon_oracle(cfg, k[0], k[1], windowed=not math.isinf(W))
                rows.append([_f(k[0]), _f(k[1]), _f(W), _f(cfg.tau), "", "", "", "", "", _f(E1), _f(E2), _f(E)])
        _write_csv(os.path.join(out_dir, "correlations.csv"), co.CORRELATION_HEADER, rows)
        if not cfg.phi:
            E = {k: photon_oracle(cfg, *k)[2] for k in keys}
            S = co.chsh(E[(cfg.a1, cfg.a2)], E[(cfg.a1, cfg.a2p)], E[(cfg.a1p, cfg.a2)], E[(cfg.a1p, cfg.a2p)])
            _write_csv(os.path.join(out_dir, "chsh.csv"), co.CHSH_HEADER,
                       [[_f(cfg.a1), _f(cfg.a2), _f(cfg.a1p), _f(cfg.a2p), _f(S)]])
        return
    rows = [
        [_f(a), _f(c), "", "", "", _f(float(oracle.neutron_correlation(a, c)))]
        for a in cfg.alpha
        for c in cfg.chi
    ]
    _write_csv(os.path.join(out_dir, "neutron.csv"), ne.NEUTRON_HEADER, rows)
    st = chsh_settings(cfg)
    _write_csv(
        os.path.join(out_dir, "neutron_chsh.csv"), ne.NEUTRON_CHSH_HEADER,
        [[*(_f(float(x)) for x in st), _f(_oracle_chsh(st, cfg.sign_convention)), cfg.sign_convention]],
    )


def sweep(cfg, parameter, values, out_dir):
    """One run per value of ``parameter``, aggregated into ``sweep.csv``.

    ``phi`` and ``W`` reproduce a run with that list (W reuses one set of
    logs); ``eta`` moves both source angles together; ``gamma``, ``alpha``
    and ``chi`` act on the neutron grid, and neutron sweeps also collect
    the CHSH value of each run in ``sweep_chsh.csv``.
    """
    if parameter not in SWEEPABLE:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {', '.join(SWEEPABLE)}")
    kind = SWEEPABLE[parameter]
    if (kind == "photon") != cfg.is_photon:
        raise ConfigError(f"parameter {parameter!r} does not apply to experiment {cfg.experiment}")
    if parameter == "eta" and cfg.experiment == "photon_I":
        raise ConfigError("experiment I has no source angle to sweep")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("sweep needs at least one value")
    os.makedirs(out_dir, exist_ok=True)
    root = RngStream(cfg.seed).substream(cfg.experiment)

    if kind == "photon":
        header = ["parameter", "value"] + co.CORRELATION_HEADER
        rows = []
        if parameter in ("phi", "W"):
            sub = replace(cfg, phi=tuple(values)) if parameter == "phi" else replace(cfg, W=tuple(values))
            if parameter == "W" and any(w < cfg.tau for w in values):
                raise ConfigError("every window must be >= tau")
            if parameter == "W":
                sub = replace(sub, min_coincidences=0)
            points = photon_points(replace(sub, save_logs="false"), None, root)
            for k, pt in enumerate(points):
                for W in _wkeys(pt):
                    if parameter == "W" and math.isinf(W):
                        continue
                    v = values[k] if parameter == "phi" else W
                    rows += [[parameter, _f(v)] + r for r in co.correlation_rows(pt.tables[W], W, cfg.tau)]
        else:
            d = cfg.eta2 - cfg.eta1
            for k, v in enumerate(values):
                sub = replace(cfg, eta1=v, eta2=v + d, save_logs="false")
                pts = photon_points(sub, None, root.substream(f"eta{k}"))
                for pt in pts:
                    for W in _wkeys(pt):
                        rows += [[parameter, _f(v)] + r for r in co.correlation_rows(pt.tables[W], W, cfg.tau)]
        _write_csv(os.path.join(out_dir, "sweep.csv"), header, rows)
        return rows

    header = ["parameter", "value"] + ne.NEUTRON_HEADER
    rows, chsh_rows = [], []
    for k, v in enumerate(values):
        if parameter == "gamma":
            sub = replace(cfg, gamma=v)
        elif parameter == "alpha":
            sub = replace(cfg, alpha=(v,))
        else:
            sub = replace(cfg, chi=(v,))
        if not 0.0 < sub.gamma < 1.0:
            raise ConfigError(f"gamma={sub.gamma} outside (0, 1)")
        stream = root.substream(f"{parameter}{k}")
        if cfg.experiment == "neutron":
            for a, c, counts, E in neutron_grid(sub, stream):
                N = counts[0]
                rows.append([parameter, _f(v), _f(a), _f(c), _f(N.N_O_up), _f(N.N_H), _f(N.N_lost), _f(E)])
            st = chsh_settings(sub)
            S = ne.chsh_neutron(*st, neutron_config(sub), stream.substream("chsh"), sub.sign_convention)
        else:
            E, res = random_chi_grid(sub, stream)
            for i, r in enumerate(res):
                for j, c in enumerate(r.chi_set):
                    N = r.counts[0, j]
                    e = E[i, j]
                    rows.append([parameter, _f(v), _f(r.alpha), _f(float(c)), _f(int(N[0])),
                                 _f(int(N[2])), _f(int(N[3])), "" if np.isnan(e) else _f(float(e))])
            S, (ia, ic, iap, icp) = grid_chsh_max(E, sub.sign_convention)
            st = (sub.alpha[ia], sub.chi[ic], sub.alpha[iap], sub.chi[icp])
        chsh_rows.append([parameter, _f(v), *(_f(float(x)) for x in st), _f(S), sub.sign_convention])
    _write_csv(os.path.join(out_dir, "sweep.csv"), header, rows)
    _write_csv(os.path.join(out_dir, "sweep_chsh.csv"), ["parameter", "value"] + ne.NEUTRON_CHSH_HEADER, chsh_rows)
    return rows


def analyze_logs(prefix, tau, W_list, out_dir):
    """Re-analyze stored logs ``<prefix>_station{1,2}.csv`` with new tau and windows.

    Writes ``correlations.csv``; when each station used two settings the
    CHSH value per window goes to ``chsh.csv`` (a = the A=0 angle).
    """
    l1 = read_log(f"{prefix}_station1.csv", 1)
    l2 = read_log(f"{prefix}_station2.csv", 2)
    os.makedirs(out_dir, exist_ok=True)
    sweep_ = co.window_sweep(l1, l2, tau, W_list)
    rows = []
    for wp in sweep_:
        rows += co.correlation_rows(wp.tables, wp.W, tau)
    allp = co.count_all_pairs(l1, l2)
    rows += co.correlation_rows(allp, INF, tau)
    _write_csv(os.path.join(out_dir, "correlations.csv"), co.CORRELATION_HEADER, rows)

    def pair(log):
        a = np.unique(log.phi[log.A == 0])
        ap = np.unique(log.phi[log.A == 1])
        return (float(a[0]), float(ap[0])) if len(a) == 1 and len(ap) == 1 and a[0] != ap[0] else None

    p1, p2 = pair(l1), pair(l2)
    chsh_rows = []
    if p1 and p2:
        (a1, a1p), (a2, a2p) = p1, p2
        for W, tabs in [(wp.W, wp.tables) for wp in sweep_] + [(INF, allp)]:
            try:
                Es = [co.correlations(tabs[k]).E for k in ((a1, a2), (a1, a2p), (a1p, a2), (a1p, a2p))]
                chsh_rows.append((W, co.chsh(*Es)))
            except (EmptyTableError, KeyError):
                chsh_rows.append((W, None))
        _write_csv(
            os.path.join(out_dir, "chsh.csv"), ["W"] + co.CHSH_HEADER,
            [[_f(W), _f(a1), _f(a2), _f(a1p), _f(a2p), _f(S)] for W, S in chsh_rows],
        )
    return rows, chsh_rows
