"""Acceptance suite: the ten end-to-end criteria at their stated tolerances.

Each ``criterion_N`` returns ``(passed, detail)``; the tests assert on it
and a one-line PASS/FAIL summary per criterion is printed at the end of the
pytest session (see ``conftest.py``).  Run directly for the summary only::

    python3 tests/test_acceptance.py [N ...]

All seeds are fixed (seed 0).
"""

import filecmp
import math
import os
import sys
import tempfile
from contextlib import redirect_stderr, redirect_stdout
from functools import lru_cache

import numpy as np
import pytest

from eventbell import coincidence as co
from eventbell import experiments as ex
from eventbell import neutron as ne
from eventbell import oracle
from eventbell.config import RunConfig, validate
from eventbell.errors import EmptyTableError
from eventbell.photon import ExperimentI, ExperimentII, StationSettings, run_experiment
from eventbell.rng import RngStream

RESULTS = {}

PHI_GRID = tuple(k * math.pi / 16 for k in range(33))  # 0 .. 2pi
GRID8 = tuple(k * math.pi / 4 for k in range(8))
INF = math.inf

# photon experiments II/III: keep simulating a setting until it has this
# many windowed coincidences; 1/sqrt(25000) = 0.0063, so the +-0.02 band is
# at least 3.2 standard errors wide
ADAPTIVE_MIN_NC = 25_000
ADAPTIVE_MAX_PAIRS = 400_000_000


def record(n, passed, detail):
    RESULTS[n] = (bool(passed), detail)
    return bool(passed), detail


# --- photons -----------------------------------------------------------------


@lru_cache(maxsize=None)
def experiment_I_grid():
    cfg = validate(RunConfig("photon_I", n_pairs=1_000_000, phi=PHI_GRID, phi2=0.0, save_logs="false"))
    return ex.photon_points(cfg)


def criterion_1():
    devs, single = [], []
    empty = 0
    for phi, pt in zip(PHI_GRID, experiment_I_grid()):
        try:
            r = pt.result(1.0)
        except EmptyTableError:
            empty += 1
            continue
        devs.append(abs(r.E + math.cos(2 * phi)))
        single += [abs(r.E1), abs(r.E2)]
    devs = np.array(devs)
    single = np.array(single)
    bad = int((single > 0.05).sum())
    ok = empty == 0 and devs.max() <= 0.1 and devs.mean() <= 0.04 and bad == 0
    return record(
        1, ok,
        f"max|E+cos2phi|={devs.max():.4f} (<=0.1), mean={devs.mean():.4f} (<=0.04), "
        f"max|E1|,|E2|={single.max():.4f} (<=0.05, {bad}/{single.size} outside), empty={empty}",
    )


def criterion_2():
    cfg = validate(RunConfig("photon_I", n_pairs=10_000_000, save_logs="false"))
    (pt,) = ex.photon_points(cfg)
    S = ex._photon_chsh(cfg, pt)[1.0]
    ok = S is not None and abs(abs(S) - 2.82) <= 0.1
    return record(2, ok, f"S={S:.4f}, |S| target 2.82 +- 0.1 (N=1e7, W=tau)")


def criterion_3():
    devs = []
    for phi, pt in zip(PHI_GRID, experiment_I_grid()):
        devs.append(abs(pt.result(INF).E + 0.5 * math.cos(2 * phi)))
    devs = np.array(devs)
    return record(3, devs.max() <= 0.01, f"max|E+cos(2phi)/2|={devs.max():.4f} (<=0.01), no window")


def _product_check(experiment, etas):
    fails, worst, empty, pairs = [], 0.0, [], 0
    for eta1, eta2 in etas:
        cfg = validate(RunConfig(
            experiment, eta1=eta1, eta2=eta2, phi=PHI_GRID, phi2=0.0, save_logs="false",
            min_coincidences=ADAPTIVE_MIN_NC, max_pairs=ADAPTIVE_MAX_PAIRS,
        ))
        zeta2 = eta1 + math.pi / 2 if experiment == "photon_II" else eta2
        for phi, pt in zip(PHI_GRID, ex.photon_points(cfg)):
            pairs += pt.n_pairs
            E1_or = math.cos(2 * (eta1 - phi))
            E_or = E1_or * math.cos(2 * zeta2)
            for W in (1.0, INF):
                label = f"eta=({math.degrees(eta1):g},{math.degrees(eta2):g}) phi={math.degrees(phi):g} " + (
                    "window" if W == 1.0 else "all-pairs"
                )
                try:
                    r = pt.result(W)
                except EmptyTableError:
                    empty.append(label)
                    continue
                d = max(abs(r.E - E_or), abs(r.E1 - E1_or))
                worst = max(worst, d)
                if d > 0.02:
                    fails.append(f"{label}: dev {d:.4f}")
    ok = not fails and not empty
    detail = f"worst dev={worst:.4f} (<=0.02), {len(fails)} points outside, {len(empty)} empty tables"
    if empty:
        detail += f" [empty: {'; '.join(empty)}]"
    if fails:
        detail += f" [outside: {'; '.join(fails[:4])}{' ...' if len(fails) > 4 else ''}]"
    detail += f", {pairs:.3g} pairs simulated"
    return ok, detail


def criterion_4():
    ok, detail = _product_check("photon_II", [(0.0, math.pi / 2), (math.radians(15), math.radians(105))])
    return record(4, ok, detail)


def criterion_5():
    ok, detail = _product_check("photon_III", [(0.0, math.pi / 2), (math.radians(30), math.radians(60))])
    return record(5, ok, detail)


# --- neutrons ------------------------------------------------------------------


def criterion_6():
    cfg = validate(RunConfig("neutron", gamma=0.99, R=0.2, n_per_setting=10_000, alpha=GRID8, chi=GRID8))
    d = np.array([abs(E - math.cos(a + c)) for a, c, _, E in ex.neutron_grid(cfg)])
    ok = d.max() <= 0.1 and d.mean() <= 0.05
    return record(6, ok, f"8x8 grid: max dev={d.max():.4f} (<=0.1), mean={d.mean():.4f} (<=0.05)")


def criterion_7():
    st, _ = oracle.chsh_bound_settings()
    targets = [(0.99, 2.83, 0.1, 100_000), (0.55, 2.05, 0.05, 400_000), (0.67, 2.30, 0.05, 400_000)]
    parts, ok = [], True
    for gamma, target, tol, n in targets:
        icfg = ne.InterferometerConfig(gamma=gamma, R=0.2, n_per_setting=n)
        S = ne.chsh_neutron(*st, icfg, RngStream(0).substream(f"gamma={gamma}"))
        good = abs(S - target) <= tol
        ok &= good
        parts.append(f"gamma={gamma}: S={S:.4f} ({target}+-{tol}, {'ok' if good else 'FAIL'})")
    return record(7, ok, "; ".join(parts))


def criterion_8():
    cfg = validate(RunConfig("neutron_random_chi", gamma=0.99, R=0.2, n_per_setting=80_000, alpha=GRID8, chi=GRID8))
    E, _ = ex.random_chi_grid(cfg)
    C = np.cos(np.add.outer(np.array(GRID8), np.array(GRID8)))
    amp = ex.fit_amplitude(E, C)
    S, _ = ex.grid_chsh_max(E)
    ok = abs(amp - 0.5) <= 0.1 and S <= 2.1
    return record(8, ok, f"fitted amplitude={amp:.4f} (0.5+-0.1), S_max={S:.4f} (<=2.1)")


def criterion_10():
    R, T = 0.2, 0.8
    chis = np.arange(16) * (2 * math.pi / 16)
    n = 100_000
    icfg = ne.InterferometerConfig(gamma=0.99, R=R, n_per_setting=n)
    rate = np.array([
        ne.run_interferometer(icfg.with_setting(0.0, c), RngStream(0).substream(f"chi{k}")).N_O_up / n
        for k, c in enumerate(chis)
    ])
    basis = 1 + np.cos(chis)
    A = float(rate @ basis / (basis @ basis))
    rel = abs(A / (T * R * R) - 1)
    return record(10, rel < 0.05, f"fitted amplitude={A:.5f} vs TR^2={T * R * R:.5f}: rel err {rel:.4f} (<0.05)")


# --- property suites -------------------------------------------------------------


def _malus_convergence():
    # experiment II with the source angle at xi' and both EOMs at 0 feeds
    # station 1 a fixed xi'
    N = 100_000
    root = RngStream(0).substream("malus")
    for k in range(16):
        xp = k * math.pi / 16
        l1, _ = run_experiment(ExperimentII(xp), StationSettings(0.0), StationSettings(0.0), N, root.substream(str(k)))
        if abs(l1.x.mean() - math.cos(2 * xp)) > 3 / math.sqrt(N):
            return False
    return True


def _dlm_invariants():
    s = RngStream(0).substream("dlm")
    bs = ne.DlmBeamSplitter.random(0.2, 0.99, s)
    u = ne.spin_up_message()
    for i in range(2000):
        ch = int(s.random_bit())
        msg = ne.rotate_about_axis(u, (0.0, 0.6, 0.8), s.uniform_angle())
        if abs(msg.norm2 - 1) > 1e-12:
            return False
        bs.absorb(ch, msg)
        if abs(bs.v.sum() - 1) > 1e-12 or (bs.v < 0).any():
            return False
        _, out = bs.emit(s)
        if abs(out.norm2 - 1) > 1e-12:
            return False
    return True


def _window_properties():
    s1, s2 = StationSettings(0.0, math.pi / 4), StationSettings(math.pi / 8, 3 * math.pi / 8)
    l1, l2 = run_experiment(ExperimentI(), s1, s2, 50_000, RngStream(0).substream("window"))
    Ws = [1, 2, 5, 10, 100, 1000, 1001, 10_000]
    pts = co.window_sweep(l1, l2, 1.0, Ws)
    nc = [sum(t.Nc for t in p.tables.values()) for p in pts]
    mono = all(a <= b for a, b in zip(nc, nc[1:]))
    allp = co.count_all_pairs(l1, l2)
    limit = all((pts[-2].tables[k].counts == allp[k].counts).all() for k in allp)
    return mono and limit


def _oracle_consistency():
    s = oracle.singlet_state()
    for a1 in np.linspace(0, math.pi, 7):
        for a2 in np.linspace(0, math.pi, 7):
            got = oracle.expectations_from_state(s, oracle.photon_direction(a1), oracle.photon_direction(a2))
            if not np.allclose(got, oracle.photon_singlet(a1, a2), atol=1e-12):
                return False
    return True


def _determinism():
    from eventbell.cli import main

    cfgs = {
        "photon.ini": "[run]\nexperiment = photon_I\nn_pairs = 20000\nW = 1, 4\n",
        "neutron.ini": "[run]\nexperiment = neutron\nalpha = 0, 90deg\nchi = 0, 45deg\nn_per_setting = 500\n",
    }
    with tempfile.TemporaryDirectory() as d:
        for name, text in cfgs.items():
            path = os.path.join(d, name)
            with open(path, "w") as fh:
                fh.write(text)
            outs = [os.path.join(d, f"{name}.{k}") for k in range(2)]
            for o in outs:
                with open(os.devnull, "w") as null, redirect_stdout(null), redirect_stderr(null):
                    code = main(["run", "--config", path, "--out", o])
                if code != 0:
                    return False
            files = sorted(os.listdir(outs[0]))
            _, mismatch, errors = filecmp.cmpfiles(*outs, files, shallow=False)
            if mismatch or errors or files != sorted(os.listdir(outs[1])):
                return False
    return True


def criterion_9():
    checks = {
        "malus": _malus_convergence(),
        "dlm-unitarity": _dlm_invariants(),
        "window": _window_properties(),
        "oracle": _oracle_consistency(),
        "determinism": _determinism(),
    }
    return record(9, all(checks.values()), ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    passed, detail = CRITERIA[n]()
    assert passed, f"criterion {n}: {detail}"


def summary_lines():
    return [f"criterion {n:2d}: {'PASS' if p else 'FAIL'}  {d}" for n, (p, d) in sorted(RESULTS.items())]


if __name__ == "__main__":
    which = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    for n in which:
        CRITERIA[n]()
        p, d = RESULTS[n]
        print(f"criterion {n:2d}: {'PASS' if p else 'FAIL'}  {d}", flush=True)
