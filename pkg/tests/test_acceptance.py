"""Acceptance criteria, one test per criterion (sub-checks of 5 are split).

Each test records a PASS/FAIL line that is printed at the end of the run.
"""
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from filreg import gallery
from filreg.clarke import clarke_subdiff, curl_residual, poincare_check, reconstruct_potential
from filreg.dynamics import integrate, residual_check, sliding_field
from filreg.fields import PiecewiseField, PointField, Stratum, constant_oracle, modify_on_null, selections_from_oracle
from filreg.geometry import ConvexBody, excess, hausdorff, hull
from filreg.partition import build_splitting, representing_function
from filreg.polynomial import Polynomial as P
from filreg.regularization import (Schedule, filippov_exact, filippov_mc, is_representable, krasovskii_exact,
                                   minimal_map, minimal_map_oracle)

from helpers import circle_slider, decoupled_relay, random_oracle, random_piecewise, record, surface_point

DISK = hull(np.c_[np.cos(np.linspace(0, 2 * np.pi, 20001)), np.sin(np.linspace(0, 2 * np.pi, 20001))])
N_CASES = 100


def test_1_gallery_counterexamples(tmp_path):
    t0 = time.time()
    problems = []
    for name, expected in (("phi1", ConvexBody.segment(0, 1)), ("phi2", ConvexBody.segment(-1, 1))):
        phi = gallery.get(name)
        verdicts, overall = is_representable(phi, [0.0, 0.5, -0.5])
        v0, vp, vm = verdicts
        if overall is not False:
            problems.append(f"{name} overall={overall}")
        if not (v0.gap >= 0.9 and v0.status == "fail"):
            problems.append(f"{name} gap(0)={v0.gap}")
        if not (vp.gap <= 0.02 and vm.gap <= 0.02 and vp.status == vm.status == "pass"):
            problems.append(f"{name} gaps(+-0.5)={vp.gap},{vm.gap}")
        if hausdorff(v0.phi_value, expected) > 0 or hausdorff(v0.m_value, ConvexBody.point([0])) > 0.02:
            problems.append(f"{name} values {v0.phi_value} {v0.m_value}")
    phi3 = gallery.get("phi3")
    verdicts, overall = is_representable(phi3, [1.0, 1 / 2, 1 / 3])
    if overall is not False:
        problems.append(f"phi3 overall={overall}")
    for m, v in zip((1, 2, 3), verdicts):
        if not (v.gap >= 0.9 / m - 0.02 and v.status == "fail"):
            problems.append(f"phi3 gap at 1/{m} = {v.gap}")
        if hausdorff(v.phi_value, ConvexBody.segment(-1 / m, 1 / m)) > 1e-15:
            problems.append(f"phi3 value at 1/{m}: {v.phi_value}")
        if hausdorff(v.m_value, ConvexBody.point([0])) > 0.02:
            problems.append(f"phi3 m-value at 1/{m}: {v.m_value}")
    # CLI verdict: exit 2 with per-probe CSV
    probes = tmp_path / "probes.json"
    probes.write_text("[0, 0.5, -0.5]")
    from filreg.cli import main
    code = main(["represent", "--oracle", "phi1", "--probes", str(probes), "--out", str(tmp_path / "v.csv")])
    if code != 2:
        problems.append(f"CLI exit {code}")
    elapsed = time.time() - t0
    if elapsed >= 5.0:
        problems.append(f"runtime {elapsed:.2f}s")
    record("1", not problems, f"phi1/phi2/phi3 verdicts, {elapsed:.2f}s " + "; ".join(problems))
    assert not problems


def test_2_rational_scale_split():
    f = gallery.get("rational-scale")
    problems = []
    rng = np.random.default_rng(7)
    pts = list(rng.uniform(-2, 2, 200)) + [0.0]
    for m in (1, 2, 3, 7, 10, 49, 97, 100):
        for p in range(-2 * m, 2 * m + 1):
            if p and np.gcd(p, m) == 1:
                pts.append(p / m)
    zero = ConvexBody.point([0.0])
    for x in pts:
        if filippov_exact(f, [x]) != zero:
            problems.append(f"F({x})")
    for m in (1, 2, 3, 7, 10, 49, 97, 100):
        for p in (1, -1, m + 1 if np.gcd(m + 1, m) == 1 else 1):
            x = p / m
            want = ConvexBody.segment(0.0, 1.0 / m)
            if krasovskii_exact(f, [x]) != want:
                problems.append(f"K({p}/{m}) = {krasovskii_exact(f, [x])}")
    record("2", not problems, f"F = {{0}} at {len(pts)} points, K(p/m) = [0, 1/m] exactly " + "; ".join(problems[:3]))
    assert not problems


def _recording(f: PointField, log: list) -> PointField:
    def fn(X):
        log.append(X.copy())
        return f.fn(X)
    return PointField(f.d, f.l, fn, f.bound, f.name, f.resolution)


def test_3_splitting_indicator():
    ind = gallery.get("splitting-indicator")
    comp = gallery.from_spec({**ind.spec, "complement": True})
    probes = np.linspace(0.05, 0.95, 10)
    problems = []
    worst = 0.0
    for i, x in enumerate(probes):
        la, lb = [], []
        ea = filippov_mc(_recording(ind, la), [x], seed=42)
        eb = filippov_mc(_recording(comp, lb), [x], seed=42)
        for e in (ea, eb):
            dist = hausdorff(e.body, ConvexBody.segment(0, 1))
            worst = max(worst, dist)
            if dist > 0.02:
                problems.append(f"x={x:.2f} dist={dist}")
        same_points = len(la) == len(lb) and all(np.array_equal(a, b) for a, b in zip(la, lb))
        va = np.vstack([ind.fn(X) for X in la])
        vb = np.vstack([comp.fn(X) for X in lb])
        if not same_points or not np.array_equal(va, 1.0 - vb):
            problems.append(f"x={x:.2f}: samples differ")
    record("3", not problems, f"max Hausdorff to [0,1] = {worst:.3g} at 10 probes; shared samples " + "; ".join(problems))
    assert not problems


def test_4_representing_function_end_to_end():
    t0 = time.time()
    phi = constant_oracle(ConvexBody.segment(-1.0, 1.0))
    sel = selections_from_oracle(phi, 64)
    f = representing_function(phi, sel, gallery.default_partition())
    probes = np.linspace(0.05, 0.95, 10)
    dists = [hausdorff(filippov_mc(f, [x], seed=42).body, phi([x])) for x in probes]
    elapsed = time.time() - t0
    ok = max(dists) <= 0.05 and elapsed < 30
    record("4", ok, f"max Hausdorff {max(dists):.3g} (<= 0.05) at 10 probes, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 5: property suites, N_CASES randomized cases each, fixed seed


def test_5a_filippov_inside_krasovskii():
    rng = np.random.default_rng(501)
    worst = 0.0
    for _ in range(N_CASES):
        f = random_piecewise(rng)
        for x in (rng.uniform(-1, 1, f.d), surface_point(f, rng)):
            worst = max(worst, excess(filippov_exact(f, x), krasovskii_exact(f, x)))
    ok = worst <= 1e-9
    record("5 F-in-K", ok, f"max excess(F, K) = {worst:.3g} over {N_CASES} fields")
    assert ok


def test_5b_null_modification_invariance():
    rng = np.random.default_rng(502)
    sched = Schedule(n_samples=1024)
    bad = 0
    for _ in range(N_CASES):
        f = random_piecewise(rng)
        if rng.random() < 0.5:
            g = modify_on_null(f, f.strata[0].guards[0], rng.uniform(-5, 5, f.l))
        else:
            g = modify_on_null(f, rng.uniform(-1, 1, (3, f.d)), rng.uniform(-5, 5, f.l))
        x = surface_point(f, rng)
        a, b = filippov_exact(f, x), filippov_exact(g, x)
        ma, mb = filippov_mc(f, x, sched, seed=11), filippov_mc(g, x, sched, seed=11)
        if not np.array_equal(a.vertices, b.vertices):
            bad += 1
        if not all(np.array_equal(p.vertices, q.vertices) for (_, p), (_, q) in zip(ma.history, mb.history)):
            bad += 1
    record("5 null-invariance", bad == 0, f"{bad} bitwise mismatches (exact and MC) over {N_CASES} fields")
    assert bad == 0


def test_5c_minimality_sandwich_and_shrinkage():
    rng = np.random.default_rng(503)
    worst_in, worst_eq, nonmono = 0.0, 0.0, 0
    for _ in range(N_CASES):
        phi, exc, probes = random_oracle(rng)
        for x in probes:
            est = minimal_map(phi, x)
            val = phi(x)
            worst_in = max(worst_in, excess(est.body, val))
            if not phi.is_exceptional(np.reshape(x, (1, -1)))[0]:
                worst_eq = max(worst_eq, hausdorff(est.body, val))
            nonmono += not est.is_monotone()
    ok = worst_in <= 0.02 and worst_eq <= 0.02
    record("5 sandwich", ok, f"max excess(m, Phi) = {worst_in:.3g}, max off-exception gap = {worst_eq:.3g}")
    record("5 shrinkage", nonmono == 0, f"{nonmono} non-monotone hull schedules")
    assert ok and nonmono == 0


def test_5d_minimal_map_idempotent():
    rng = np.random.default_rng(504)
    inner = Schedule(delta0=0.01, k_steps=3, n_samples=256)
    outer = Schedule(delta0=0.01, k_steps=2, n_samples=16)
    worst = 0.0
    for _ in range(N_CASES):
        phi, exc, probes = random_oracle(rng)
        m = minimal_map_oracle(phi, inner, seed=5)
        for x in probes[:2]:
            mm = minimal_map(m, x, outer, seed=6).body
            worst = max(worst, hausdorff(mm, m(x)))
    ok = worst <= 0.04
    record("5 idempotence", ok, f"max Hausdorff(m(m(Phi)), m(Phi)) = {worst:.3g} (<= 0.04)")
    assert ok


# ---------------------------------------------------------------------------


def test_6_dynamics():
    problems = []
    f = gallery.get("sign-flow")
    tr = integrate(f, [1.0], 1.5)
    entry = tr.switch_times("entry")
    if abs(tr.states[-1, 0]) > 1e-6:
        problems.append(f"x(1.5) = {tr.states[-1, 0]}")
    if not entry or abs(entry[0] - 1.0) > 1e-6 or not tr.modes[-1].startswith("sliding"):
        problems.append(f"switch times {entry}")
    relay = decoupled_relay()
    tr2 = integrate(relay, [0.0, 0.5], 1.0)
    if np.max(np.abs(tr2.states[-1] - [1.0, 0.0])) > 1e-6:
        problems.append(f"relay end {tr2.states[-1]}")
    runs = [(f, tr, 1.5e-3), (relay, tr2, 1e-3)]
    for x0 in (-0.7, 0.0, 0.3):
        runs.append((f, integrate(f, [x0], 1.0), 1e-3))
    cs = circle_slider()
    runs.append((cs, integrate(cs, [1.5, 0.0], 2.0), 2e-3))
    runs.append((gallery.get("rotation2d"), integrate(gallery.get("rotation2d"), [1.0, 0.0], 3.0), 3e-3))
    worst = 0.0
    for fld, t, h in runs:
        rep = residual_check(t, fld, tol=10 * h)
        worst = max(worst, rep.max_residual / rep.tol)
        if not rep.passed:
            problems.append(f"residual {rep.max_residual} > {rep.tol}")
    pairs = [(([1, -2], [1, 1], [0, 1]), 1 / 3, [1, 0]), (([0, -1], [1, 3], [0, 1]), 3 / 4, [0.25, 0]),
             (([-1], [1], [1]), 0.5, [0])]
    for args, lam, v in pairs:
        vv, ll = sliding_field(*args)
        if abs(ll - lam) > 1e-12 or np.max(np.abs(vv - v)) > 1e-12:
            problems.append(f"sliding_field{args} = {vv}, {ll}")
    record("6", not problems, f"closed forms met, worst residual/tol = {worst:.3g} " + "; ".join(problems))
    assert not problems


def test_7_clarke():
    problems = []
    box = [[-1, 1], [-1, 1]]
    rot = curl_residual(gallery.get("rotation2d"), box).max_residual
    ok_rot, _ = poincare_check(gallery.get("rotation2d"), box)
    if ok_rot or rot < 1.5:
        problems.append(f"rotation residual {rot}")
    acc = {}
    for name in ("abs-grad2d", "radial2d"):
        ok, rep = poincare_check(gallery.get(name), box, n=512)
        acc[name] = rep.max_residual
        if not ok or rep.max_residual > 5e-3:
            problems.append(f"{name} residual {rep.max_residual}")
    d_disk = hausdorff(clarke_subdiff(gallery.get("radial2d"), [0.0, 0.0]), DISK)
    if d_disk > 0.05:
        problems.append(f"radial subdiff distance {d_disk}")
    grad = PiecewiseField(2, 2, (Stratum((), (P.coordinate(2, 0, 2.0), P.coordinate(2, 1, 2.0))),), (), 4.0)
    pg = reconstruct_potential(grad, box, 1 / 64)
    X, Y = np.meshgrid(*pg.axes, indexing="ij")
    err = float(np.max(np.abs(pg.values - (X ** 2 + Y ** 2 - 2.0))))
    if err > 1e-3:
        problems.append(f"potential error {err}")
    record("7", not problems, f"rotation {rot:.4f}, abs-grad {acc['abs-grad2d']:.2g}, radial {acc['radial2d']:.2g}, "
           f"disk distance {d_disk:.3g}, potential error {err:.2g} " + "; ".join(problems))
    assert not problems


def test_8_splitting_partition():
    p = build_splitting(8, 32, 12)
    rng = np.random.default_rng(8)
    worst = np.inf
    for (lo, hi), bounds in zip(p.test_boxes, p.certificate):
        X = rng.uniform(lo, hi, 100_000)
        freq = np.bincount(p.assign_many(X), minlength=9)[1:] / len(X)
        worst = min(worst, float(np.min(freq - bounds / (hi - lo))))
    ok = p.certificate_ok() and p.is_disjoint() and worst >= -0.01
    record("8", ok, f"{len(p.test_boxes)} boxes x 8 classes certified > 0 (min {p.certificate.min():.3g}); "
           f"min(freq - bound) = {worst:.3g}")
    assert ok


CLI_RUNS = [
    ["regularize", "--field", "sign1d", "--x", "0", "--engine", "exact"],
    ["regularize", "--field", "sign1d", "--x", "0", "--engine", "mc"],
    ["regularize", "--field", "radial2d", "--x", "0,0", "--engine", "mc", "--n-samples", "512"],
    ["regularize", "--field", "rational-scale", "--x", "0.5", "--kras"],
    ["represent", "--oracle", "phi1", "--probes", "[0, 0.5, -0.5]"],
    ["represent", "--oracle", "phi3", "--probes", "[1, 0.5]", "--expect", "not-representable"],
    ["simulate", "--field", "sign-flow", "--x0", "1", "--T", "1.5", "--check"],
    ["clarke", "--field", "rotation2d", "--check", "--n", "64"],
    ["clarke", "--field", "radial2d", "--at", "0,0", "--n", "64", "--n-samples", "512"],
    ["clarke", "--field", "abs-grad2d", "--potential", "-", "--h", "0.125"],
    ["partition", "--n-cls", "3", "--k-max", "8", "--depth", "6"],
    ["partition", "--json", "--n-cls", "3", "--k-max", "8", "--depth", "6"],
    ["gallery", "--list"],
    ["gallery", "--dump", "relay2d"],
]


def test_9_cli_byte_identical():
    outs = []
    for hashseed in ("1", "2"):
        env = dict(os.environ, PYTHONHASHSEED=hashseed)
        outs.append([subprocess.run([sys.executable, "-m", "filreg.cli", *argv], capture_output=True, env=env)
                     for argv in CLI_RUNS])
    bad = [" ".join(a) for a, r1, r2 in zip(CLI_RUNS, *outs)
           if r1.stdout != r2.stdout or r1.returncode != r2.returncode or not r1.stdout]
    codes = [r.returncode for r in outs[0]]
    errors = [" ".join(a) for a, c in zip(CLI_RUNS, codes) if c == 1]
    ok = not bad and not errors
    record("9", ok, f"{len(CLI_RUNS)} CLI runs byte-identical across 2 executions " + "; ".join(bad + errors))
    assert ok
