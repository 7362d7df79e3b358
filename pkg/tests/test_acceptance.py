"""Acceptance suite.  Each test prints one PASS/FAIL line; the session summary repeats them."""

import math
import time

import numpy as np
import pytest

from sheet_extremes import bounds as B
from sheet_extremes import campaign as C
from sheet_extremes import global_bounds as G
from sheet_extremes.cli import main
from sheet_extremes.field_model import (
    HurstPair,
    Rect,
    fbs_covariance,
    increment_std_bound,
    increment_variance_exact,
    increment_variance_h,
    increment_variance_v,
    rect_increment_variance,
)
from sheet_extremes.optimizer import optimize_p
from sheet_extremes.simulator import Grid2, SheetSampler

pytestmark = pytest.mark.acceptance

DOMINATION_H = [HurstPair(0.3, 0.3), HurstPair(0.5, 0.5), HurstPair(0.7, 0.4)]
SAMPLER_H = [HurstPair(0.3, 0.7), HurstPair(0.5, 0.5), HurstPair(0.8, 0.2)]
EPS = [2.5, 3.0, 4.0, 6.0]
PATHS = 100_000
SEED = 20240601


def report(n, ok, detail):
    print(f"\nACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def random_hurst(rng, k):
    return [HurstPair(*rng.uniform(0.05, 0.95, 2)) for _ in range(k)]


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def test_criterion_1_field_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    violations = 0
    n_pairs = 10_000
    for h in random_hurst(rng, 10):
        # extended precision: near-coincident pairs cancel about six digits in the expansion
        t = rng.uniform(0.0, 3.0, (2, n_pairs)).astype(np.longdouble)
        s = rng.uniform(0.0, 3.0, (2, n_pairs)).astype(np.longdouble)
        a = rng.uniform(0.1, 4.0, 2)
        # symmetry and annihilation on the axes
        assert np.array_equal(fbs_covariance(h, t, s), fbs_covariance(h, s, t))
        assert np.all(fbs_covariance(h, (np.zeros(n_pairs), t[1]), s) == 0.0)
        assert np.all(fbs_covariance(h, (t[0], np.zeros(n_pairs)), s) == 0.0)
        # increments along each coordinate
        ex_h = increment_variance_exact(h, t, (s[0], t[1]))
        worst = max(worst, float(rel_err(ex_h, increment_variance_h(h, t, s[0])).max()))
        ex_v = increment_variance_exact(h, (s[0], t[1]), s)
        worst = max(worst, float(rel_err(ex_v, increment_variance_v(h, s, t[1])).max()))
        # Minkowski domination of the full increment
        sd = np.sqrt(np.maximum(increment_variance_exact(h, t, s), 0.0))
        violations += int(np.sum(sd > increment_std_bound(h, t, s) * (1 + 1e-12) + 1e-15))
        # self-similarity
        lhs = fbs_covariance(h, (a[0] * t[0], a[1] * t[1]), (a[0] * s[0], a[1] * s[1]))
        rhs = a[0] ** (2 * h.h1) * a[1] ** (2 * h.h2) * fbs_covariance(h, t, s)
        worst = max(worst, float((np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-12)).max()))
        # stationary rectangular increments
        for i in range(200):
            u = rng.uniform(0.0, 2.0, 2)
            d = rng.uniform(0.05, 1.0, 2)
            sh = rng.uniform(0.0, 2.0, 2)
            target = d[0] ** (2 * h.h1) * d[1] ** (2 * h.h2)
            v1 = rect_increment_variance(h, u, u + d)
            v2 = rect_increment_variance(h, u + sh, u + sh + d)
            worst = max(worst, float(rel_err(v1, target)), float(rel_err(v2, target)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and violations == 0 and dt < 10
    report(1, ok, f"worst relative error {worst:.2e}, Minkowski violations {violations}, {dt:.1f} s")
    assert worst <= 1e-10
    assert violations == 0
    assert dt < 10


def test_criterion_2_sampler_exactness():
    t0 = time.perf_counter()
    worst_kron = 0.0
    worst_z = 0.0
    rng = np.random.default_rng(2)
    for h in SAMPLER_H:
        for n1, n2 in ((8, 8), (16, 24), (32, 32)):
            g = Grid2.uniform(Rect(1.0, 1.0) if n1 != 16 else Rect(2.0, 3.0), n1, n2)
            s = SheetSampler(h, g)
            F = s.covariance_factor()
            T1, T2 = np.meshgrid(g.axis1, g.axis2, indexing="ij")
            x, y = T1.ravel(), T2.ravel()
            full = fbs_covariance(h, (x[:, None], y[:, None]), (x[None, :], y[None, :]))
            worst_kron = max(worst_kron, float(np.max(np.abs(F @ F.T - full))))
        # empirical covariance of 1e5 paths at 20 random entry pairs on the 32 x 32 grid
        n = 32 * 32
        i = rng.integers(0, n, 20)
        j = rng.integers(0, n, 20)
        s1 = np.zeros(20)
        s2 = np.zeros(20)
        chunk = 5000
        for start in range(0, PATHS, chunk):
            block = s.interior(start, start + chunk, SEED).reshape(chunk, n)
            prod = block[:, i] * block[:, j]
            s1 += prod.sum(axis=0)
            s2 += (prod ** 2).sum(axis=0)
        mean = s1 / PATHS
        se = np.sqrt((s2 / PATHS - mean ** 2) / (PATHS - 1))
        z = np.abs(mean - full[i, j]) / se
        worst_z = max(worst_z, float(z.max()))
    dt = time.perf_counter() - t0
    ok = worst_kron <= 1e-7 and worst_z <= 4 and dt < 300
    report(2, ok, f"Kronecker max-abs {worst_kron:.2e}, worst |z| {worst_z:.2f}, {dt:.1f} s")
    assert worst_kron <= 1e-7
    assert worst_z <= 4
    assert dt < 300


def _certify_rows(hurst, dom, eps, families=None):
    cfg = C.CampaignConfig(list(hurst), dom, list(eps), families, PATHS, SEED, (64, 64))
    return C.certify(cfg)


def test_criterion_3_compact_bound_domination():
    t0 = time.perf_counter()
    rows = _certify_rows(DOMINATION_H, C.parse_domain("unit"), EPS)
    rows += _certify_rows(DOMINATION_H, C.parse_domain("square12"), EPS)
    dt = time.perf_counter() - t0
    valid = [r for r in rows if r.bound.valid]
    bad = [r for r in valid if not r.dominated]
    informative = sum(r.bound.value < 1 for r in valid)
    fams = sorted({r.bound.family for r in rows})
    ok = not bad and dt < 900 and fams == ["eq10", "eq12", "eq15", "eq16", "eq17", "eq18"]
    report(3, ok, f"{len(valid)} valid rows ({informative} below 1), {len(bad)} violations, "
                  f"families {','.join(fams)}, {dt:.1f} s")
    for r in bad:
        print(f"  violation: h={r.h} {r.bound.family} eps={r.eps} ci99_high={r.ci99_high} "
              f"bound={r.bound.value}")
    assert not bad
    assert fams == ["eq10", "eq12", "eq15", "eq16", "eq17", "eq18"]
    assert dt < 900


def _global_eps(h, dom):
    if dom.phi:
        phi = dom.weight()
        th = [2.0 / phi.at_one, G.cor48_threshold(h, phi.at_one), G.cor48_threshold(h, 1.0)]
    else:
        M = G.schedule_m_constant(h, dom.growth_schedule(), dom.normalizer_fn()).value
        th = [2.0 / M, G.cor36_threshold(h, M)]
    return sorted({1.5 * t for t in th})


def test_criterion_4_global_bound_domination():
    t0 = time.perf_counter()
    rows = []
    domains = [C.parse_domain("quadrant", schedule="exp", normalizer="loglog"),
               C.parse_domain("quadrant", phi="phi1"), C.parse_domain("quadrant", phi="phi2")]
    for dom in domains:
        for h in DOMINATION_H:
            rows += _certify_rows([h], dom, _global_eps(h, dom))
    dt = time.perf_counter() - t0
    valid = [r for r in rows if r.bound.valid]
    bad = [r for r in valid if not r.dominated]
    fams = sorted({r.bound.family for r in valid})
    need = {"eq13", "eq14", "ex1", "eq20", "ex2"}
    ok = not bad and need <= set(fams) and dt < 900
    report(4, ok, f"{len(valid)} valid rows, {len(bad)} violations, valid families "
                  f"{','.join(fams)}, {dt:.1f} s")
    for r in bad:
        print(f"  violation: h={r.h} {r.domain} {r.bound.family} eps={r.eps} "
              f"ci99_high={r.ci99_high} bound={r.bound.value}")
    assert not bad
    assert need <= set(fams)
    assert dt < 900


def test_criterion_5_formula_reproduction():
    rng = np.random.default_rng(5)
    worst = 0.0
    sched, c = G.GrowthSchedule.exponential(), G.Normalizer.loglog()
    k = np.arange(0, 200)
    for h in random_hurst(rng, 10):
        s = h.h1 + h.h2
        M = math.exp(-s)
        u = 3.0 * math.exp(-2 * s) / (4.0 * (4 ** (1 - h.h_min) + 3.0))
        consts = G.example1_constants(h)
        m_probe = G.schedule_m_constant(h, sched, c).value
        v = 2.0 * (G._w_terms(h, sched, c, k) / m_probe) ** 2
        worst = max(worst, rel_err(consts["M"], M), rel_err(m_probe, M), rel_err(consts["u"], u),
                    rel_err(G.cor36_u(h, m_probe), u),
                    float(rel_err(v, 2.0 * np.log(k + math.e)).max()),
                    float(rel_err(G.example1_v(k), 2.0 * np.log(k + math.e)).max()))
    n, m = np.meshgrid(np.arange(101), np.arange(101), indexing="ij")
    for h in random_hurst(rng, 4):
        q = h.q
        printed = {
            "phi1": np.log(n + m + math.e) ** q / (n + m + math.e) ** 2,
            "phi2": np.log((n + math.e) * (m + math.e)) ** q / ((n + math.e) ** 2 * (m + math.e) ** 2),
        }
        for which, ref in printed.items():
            worst = max(worst, float(rel_err(G.example2_series_terms(h, which, n, m), ref).max()))
            via_weight = G.cor48_series_terms(h, getattr(G.WeightFn, which)(), n, m, kappa=1.0)
            worst = max(worst, float(rel_err(via_weight, ref).max()))
    ok = worst <= 1e-12
    report(5, ok, f"worst relative error {worst:.2e}")
    assert worst <= 1e-12


def test_criterion_6_consistency_chain():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    configs = 0
    worst_eq = 0.0
    fails = []
    sched, c = G.GrowthSchedule.exponential(), G.Normalizer.loglog()
    for _ in range(120):
        h = HurstPair(*rng.uniform(0.05, 0.95, 2))
        eps = float(rng.uniform(2.05, 12.0))
        p = 1.0 / eps ** 2
        # generic bound at lambda* against the optimised corollary
        alpha = float(rng.uniform(0.2, 1.0))
        inp = B.power_sigma_inputs(1.0, float(rng.uniform(0.5, 3.0)), alpha, float(rng.uniform(0, 2)),
                                   float(rng.uniform(0.05, 0.9)), alpha * float(rng.uniform(0.05, 0.45)))
        inp.lam = B.lambda_star(inp, eps)
        d = abs(B.generic_bound_thm21(inp, eps).log_value - B.optimized_bound_cor22(inp, eps).log_value)
        worst_eq = max(worst_eq, d)
        # closed forms over parametric parents at p = 1/eps^2
        T = (float(rng.uniform(1, 4)), float(rng.uniform(1, 4)))
        pairs = [("eq12/eq10", B.log_bound_unit_square_eps(h, eps), B.log_bound_unit_square_rho1(h, p, eps)),
                 ("eq16/eq15", B.log_bound_rect_rho2_eps(h, Rect(*T), eps),
                  B.log_bound_rect_rho2(h, Rect(*T), p, eps)),
                 ("eq18/eq17", B.log_bound_square12_eps(h, eps), B.log_bound_square12_rho2(h, p, eps))]
        for name, closed, parent in pairs:
            if closed < parent - 1e-12 * abs(parent):
                fails.append((name, h, eps))
        # relaxations of the series bounds
        M = G.schedule_m_constant(h, sched, c).value
        e36 = float(rng.uniform(1.02, 3.0)) * G.cor36_threshold(h, M)
        a = G.global_bound_thm35(h, sched, c, e36)[0]
        b = G.global_bound_cor36(h, sched, c, e36)[0]
        if not (a.valid and b.valid and b.log_value >= a.log_value - 1e-12):
            fails.append(("cor36>=thm35", h, e36))
        e48 = float(rng.uniform(1.02, 3.0)) * G.cor48_threshold(h, 1.0)
        for phi, kappa in ((G.WeightFn.phi2(), 1.0), (G.WeightFn.phi1(), 0.8)):
            e = max(e48, 1.02 * G.cor48_threshold(h, kappa))
            a = G.quadrant_bound_thm47(h, phi, e)[0]
            b = G.quadrant_bound_cor48(h, phi, e, kappa=kappa)[0]
            if not (a.valid and b.valid and b.log_value >= a.log_value - 1e-12):
                fails.append((f"cor48>=thm47 {phi.name}", h, e))
        # the optimiser never loses to a fixed p
        for fam, dom in (("eq10", Rect.unit()), ("eq15", Rect(*T)), ("eq17", Rect.square12())):
            rep = optimize_p(fam, h, dom, eps)
            logf = {"eq10": lambda q: B.log_bound_unit_square_rho1(h, q, eps),
                    "eq15": lambda q: B.log_bound_rect_rho2(h, Rect(*T), q, eps),
                    "eq17": lambda q: B.log_bound_square12_rho2(h, q, eps)}[fam]
            for q in (p, 0.5, float(rng.uniform(1e-6, 1 - 1e-6))):
                if rep.log_value > logf(q) + 1e-12:
                    fails.append((f"optimizer {fam}", h, eps))
        configs += 1
    dt = time.perf_counter() - t0
    ok = worst_eq <= 1e-12 and not fails and configs >= 100 and dt < 60
    report(6, ok, f"{configs} configurations, thm21/cor22 log gap {worst_eq:.1e}, "
                  f"{len(fails)} failures, {dt:.1f} s")
    assert worst_eq <= 1e-12
    assert not fails, fails[:5]
    assert dt < 60


def test_criterion_7_covering_sanity():
    t0 = time.perf_counter()
    hurst = [HurstPair(0.3, 0.7), HurstPair(0.5, 0.5), HurstPair(0.8, 0.2),
             HurstPair(0.1, 0.4), HurstPair(0.9, 0.9)]
    sweep = C.covering_sweep(hurst, n_radii=10)
    dt = time.perf_counter() - t0
    bad = [r for r in sweep if not r["ok"]]
    metrics = {r["metric"] for r in sweep}
    ok = not bad and metrics == {"rho1", "rho2"} and dt < 120
    report(7, ok, f"{len(sweep)} radii over 5 Hurst pairs, {len(bad)} violations, {dt:.1f} s")
    assert not bad
    assert metrics == {"rho1", "rho2"}
    assert dt < 120


def _global_eval(kind, h, eps, budget):
    sched_exp, c = G.GrowthSchedule.exponential(), G.Normalizer.loglog()
    if kind == "thm35":
        return G.global_bound_thm35(h, sched_exp, c, eps, budget=budget)
    if kind == "thm35-geometric":
        return G.global_bound_thm35(h, G.GrowthSchedule.geometric(1.7), c, eps, budget=budget)
    if kind == "cor36":
        return G.global_bound_cor36(h, sched_exp, c, eps, budget=budget)
    if kind == "ex1":
        return G.example1_bound(h, eps, budget=budget)
    if kind == "thm47-phi1":
        return G.quadrant_bound_thm47(h, G.WeightFn.phi1(), eps, budget_1d=budget)
    if kind == "thm47-phi2":
        return G.quadrant_bound_thm47(h, G.WeightFn.phi2(), eps, budget_2d=budget)
    if kind == "ex2-phi2":
        return G.example2_bounds(h, "phi2", eps, budget_2d=budget)
    raise AssertionError(kind)


def test_criterion_8_truncation_soundness():
    rng = np.random.default_rng(8)
    kinds = ["thm35", "thm35-geometric", "cor36", "ex1", "thm47-phi1", "thm47-phi2", "ex2-phi2"]
    done = 0
    worst = 0.0
    fails = []
    attempts = 0
    while done < 20:
        attempts += 1
        assert attempts < 200
        kind = kinds[done % len(kinds)]
        h = HurstPair(*rng.uniform(0.1, 0.9, 2))
        two_d = kind in ("thm47-phi2", "ex2-phi2")
        budget = int(rng.choice([64, 256, 1024])) if two_d else int(rng.choice([8, 16, 32, 64]))
        if kind.startswith("thm35") or kind in ("cor36", "ex1"):
            M = G.schedule_m_constant(h, G.GrowthSchedule.exponential(), G.Normalizer.loglog()).value
            eps = float(rng.uniform(1.05, 2.0)) * G.cor36_threshold(h, M)
        else:
            eps = float(rng.uniform(1.05, 2.0)) * G.cor48_threshold(h, 1.0)
        try:
            r1, s1 = _global_eval(kind, h, eps, budget)
            r2, s2 = _global_eval(kind, h, eps, 2 * budget)
        except G.SeriesDivergenceError:
            continue
        v1, v2 = r1.value, r2.value
        # the tail estimate scaled into the same units as the reported bound
        tail = v1 * s1.tail_estimate / s1.total
        change = abs(v2 - v1)
        worst = max(worst, change / tail if tail > 0 else (0.0 if change == 0 else math.inf))
        if not change <= tail * (1 + 1e-9) + 1e-14 * v1:
            fails.append((kind, h, eps, budget, change, tail))
        done += 1
    ok = not fails
    report(8, ok, f"{done} configurations, worst change/tail {worst:.3g}, {len(fails)} failures")
    assert not fails, fails


def test_criterion_9_determinism(tmp_path, capsys):
    outs = []
    for w in (1, 4, 8):
        path = tmp_path / f"w{w}.csv"
        code = main(["certify", "--h", "0.5,0.5", "--h", "0.7,0.4", "--paths", "20000", "--grid", "64x64",
                     "--eps", "2.5,3,4,6", "--seed", "17", "--workers", str(w), "--out", str(path)])
        capsys.readouterr()
        assert code == 0
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] == outs[2] and len(outs[0]) > 0
    with capsys.disabled():
        pass
    report(9, ok, f"{len(outs[0])} bytes, identical at workers 1, 4, 8: {ok}")
    assert ok
