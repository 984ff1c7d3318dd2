"""Acceptance gate: one PASS/FAIL line per criterion.

Criteria 2, 3, 6 and 7b run the full-size experiments and are marked slow
(``pytest -m "not slow"`` skips them).
"""

import filecmp
import itertools
import math
from pathlib import Path

import numpy as np
import pytest

from coevolab import cli
from coevolab.evolution import BinarySpace, CooperativeGA, EaParams
from coevolab.experiments import ALGORITHMS, Job, SuiteConfig, build_ga, run_suite
from coevolab.nkcs import NkcsConfig, generate_nkcs
from coevolab.stats import mann_whitney_u
from coevolab.surrogate import init_mlp, loss_and_gradient, predict
from coevolab.vawt.energy import Measurement, array_fitness, kinetic_energy
from coevolab.vawt.genome import SEED_GENOME
from coevolab.vawt.geometry import blade_profile, build_turbine, is_watertight, z_offset
from coevolab.vawt.loop import VawtLoopConfig, run_vawt_loop
from coevolab.vawt.protocol import MockEvaluator

from conftest import make_fig1_model

CELLS = ((2, 2), (2, 8), (6, 2), (6, 8))


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {criterion}: {'PASS' if ok else 'FAIL'}; {detail}")
        return ok
    return emit


# ---------------------------------------------------------------- 1


def test_criterion_1_fig1_oracle(report):
    model = make_fig1_model()
    team = np.array([[1, 0, 1], [1, 1, 0]], dtype=np.uint8)
    f = model.species_fitness(0, team)
    ok = abs(f - 1.25 / 3) <= 1e-9
    report(1, ok, f"species_fitness(s1=[1,0,1], s2=[1,1,0]) = {f:.12f}, expected 0.416666666667")
    assert ok


# ---------------------------------------------------------------- 2 and 3


@pytest.fixture(scope="module")
def cga_suite():
    cfg = SuiteConfig(algorithms=("CGA-b", "CGA-br", "CGA-re", "CGA-o"), cells=CELLS,
                      instances=10, runs=10, budget=3600, checkpoints=(480, 3600), seed=0)
    return run_suite(cfg)


@pytest.mark.slow
def test_criterion_2a_collaboration_ordering(cga_suite, report):
    lines, ok = [], True
    for k, c in CELLS:
        base = cga_suite.values("CGA-b", k, c, 480)
        for other in ("CGA-br", "CGA-re"):
            vals = cga_suite.values(other, k, c, 480)
            _, p = mann_whitney_u(base, vals)
            good = base.mean() > vals.mean() and p < 0.05
            ok &= good
            lines.append(f"K{k}C{c} b={base.mean():.4f} {other[4:]}={vals.mean():.4f} p={p:.2g}")
    report("2a", ok, "CGA-b > CGA-br, CGA-re at 480 (p<0.05) in all cells: " + "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_criterion_2b_cga_band(cga_suite, report):
    m480 = cga_suite.mean("CGA-b", 2, 2, 480)
    m3600 = cga_suite.mean("CGA-b", 2, 2, 3600)
    ok = abs(m480 - 3.8449) <= 0.10 and abs(m3600 - 4.1464) <= 0.10
    report("2b", ok, f"CGA-b K2C2 mean {m480:.4f} @480 (target 3.8449 +/- 0.10), "
                     f"{m3600:.4f} @3600 (target 4.1464 +/- 0.10)")
    assert ok


@pytest.mark.slow
def test_criterion_3_surrogate_benefit(cga_suite, report):
    cfg = SuiteConfig(algorithms=("SCGA-b", "SCGA-a"), cells=CELLS, instances=10, runs=10,
                      budget=480, checkpoints=(480,), seed=0)
    scga = run_suite(cfg)
    wins, lines, ok_a = 0, [], True
    for k, c in CELLS:
        b = scga.values("SCGA-b", k, c, 480)
        a = scga.values("SCGA-a", k, c, 480)
        # same master seed, so the CGA-b runs share instances and initial populations
        g = cga_suite.values("CGA-b", k, c, 480)
        _, p_g = mann_whitney_u(b, g)
        _, p_a = mann_whitney_u(b, a)
        win = b.mean() > g.mean() and p_g < 0.05
        wins += win
        if (k, c) != (6, 8):
            ok_a &= b.mean() > a.mean() and p_a < 0.05
        lines.append(f"K{k}C{c} SCGA-b={b.mean():.4f} CGA-b={g.mean():.4f} (p={p_g:.2g}) "
                     f"SCGA-a={a.mean():.4f} (p={p_a:.2g})")
    ok = wins >= 3 and ok_a
    report(3, ok, f"SCGA-b > CGA-b significant in {wins}/4 cells (need 3); SCGA-b > SCGA-a in "
                  f"K2C2, K2C8, K6C2: {ok_a}: " + "; ".join(lines))
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_budget_accounting(report):
    model = generate_nkcs(NkcsConfig(20, 2, 2, 6, "chain", 11))
    space = BinarySpace(20, 0.05)

    def fresh(scheme):
        return CooperativeGA(space, model.team_fitness, 6, EaParams(scheme=scheme), np.random.default_rng(3))

    ga = fresh("b")
    ga.initialize()
    init_cost = ga.evaluations
    cycles = {}
    for scheme in ("b", "o", "br"):
        ga = fresh(scheme)
        ga.initialize()
        before = ga.evaluations
        turns = 1 if scheme == "o" else 6
        for _ in range(turns):
            ga.step()
        cycles[scheme] = ga.evaluations - before
    ga = fresh("b")
    ga.run(480)
    per_species = [len(p.archive) for p in ga.populations]
    offspring = [sum(o > init_cost for o in p.archive.ordinals) for p in ga.populations]
    ok = (init_cost == 120 and cycles == {"b": 6, "o": 1, "br": 12} and ga.evaluations == 480
          and per_species == [80] * 6 and offspring == [60] * 6)
    report(4, ok, f"init={init_cost}, cycle b/o/br={cycles['b']}/{cycles['o']}/{cycles['br']}, "
                  f"480 evals -> {offspring[0]} offspring per species ({(480 - init_cost) // 120} generations)")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_gradient_check(report):
    rng = np.random.default_rng(5)
    h = 1e-5
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 25))
        mlp = init_mlp(d, int(rng.integers(1, 16)), rng)
        mlp.w1 += rng.normal(0, 0.5, mlp.w1.shape)
        x = rng.random(d)
        t = float(rng.random())
        _, grads = loss_and_gradient(mlp, x, t)
        for name in ("w1", "b1", "w2", "b2"):
            param = getattr(mlp, name)
            numeric = np.empty_like(param)
            for idx in np.ndindex(param.shape):
                old = param[idx]
                param[idx] = old + h
                up = 0.5 * (predict(mlp, x) - t) ** 2
                param[idx] = old - h
                down = 0.5 * (predict(mlp, x) - t) ** 2
                param[idx] = old
                numeric[idx] = (up - down) / (2 * h)
            scale = max(np.linalg.norm(numeric), np.linalg.norm(grads[name]), 1e-8)
            worst = max(worst, np.linalg.norm(numeric - grads[name]) / scale)
    ok = worst <= 1e-4
    report(5, ok, f"max relative error over 100 networks = {worst:.2e} (limit 1e-4)")
    assert ok


# ---------------------------------------------------------------- 6


def exhaustive_optimum(model):
    """Brute-force maximum team fitness for a 6-species chain with N=4."""
    S, N = model.n_species, model.n_genes
    genomes = np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)  # 16 x N
    G = len(genomes)
    # per-species fitness over (left, own, right) neighbour genomes
    tables = []
    for s in range(S):
        left, right = s - 1 >= 0, s + 1 < S
        shape = (G if left else 1, G, G if right else 1)
        teams = np.zeros(shape + (S, N), dtype=np.uint8)
        for idx in np.ndindex(shape):
            if left:
                teams[idx][s - 1] = genomes[idx[0]]
            teams[idx][s] = genomes[idx[1]]
            if right:
                teams[idx][s + 1] = genomes[idx[2]]
        tables.append(model.reference_contributions(teams).mean(axis=-1)[..., s])
    best = -np.inf
    for g0 in range(G):
        # total over g1..g5 for fixed g0: broadcast the chain terms into a 16^5 array
        total = tables[0][0, g0, :].reshape(G, 1, 1, 1, 1)
        total = total + tables[1][g0].reshape(G, G, 1, 1, 1)
        total = total + tables[2].reshape(G, G, G, 1, 1)
        total = total + tables[3].reshape(1, G, G, G, 1)
        total = total + tables[4].reshape(1, 1, G, G, G)
        total = total + tables[5][:, :, 0].reshape(1, 1, 1, G, G)
        best = max(best, float(total.max()))
    return best


@pytest.mark.slow
def test_criterion_6_exhaustive_bound(report):
    cfg = SuiteConfig(algorithms=ALGORITHMS, cells=((1, 1),), n_genes=4, budget=3600, checkpoints=(3600,))
    hits, violations = 0, 0
    for inst in range(10):
        model = generate_nkcs(NkcsConfig(4, 1, 1, 6, "chain", 1000 + inst))
        opt = exhaustive_optimum(model)
        for alg in ALGORITHMS:
            # surrogate runs are capped at 480 evaluations to keep the gate fast
            budget = 3600 if alg.startswith("CGA") else 480
            ga = build_ga(cfg, Job(alg, 1, 1, inst, 0), model.team_fitness)
            best = ga.run(budget).best
            if best > opt + 1e-12:
                violations += 1
            if alg == "CGA-b" and abs(best - opt) <= 1e-12:
                hits += 1
    ok = violations == 0 and hits >= 8
    report(6, ok, f"bound violations={violations}; CGA-b reached the optimum in {hits}/10 instances")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7a_geometry_and_energy(report):
    mesh = build_turbine(SEED_GENOME, resolution=24)
    lo, hi = mesh.bounds()
    envelope = bool(np.all(lo >= [-17.5 - 1e-9] * 2 + [0.0]) and np.all(hi <= [17.5 + 1e-9] * 2 + [70.0])
                    and math.isclose(hi[2] - lo[2], 70.0) and math.isclose(hi[0] - lo[0], 35.0, abs_tol=0.05))
    watertight = all(is_watertight(s.faces) for s in mesh.shells)
    g = SEED_GENOME.to_array()
    prof = blade_profile(g, 17)
    ends = (np.array_equal(prof[0], g[0:2]) and np.array_equal(prof[16], g[4:6])
            and np.array_equal(prof[-1], g[8:10]))
    dx, dy = z_offset(g, np.linspace(0, 1, 11))
    zero = bool(np.all(dx == 0) and np.all(dy == 0))
    ke = kinetic_energy(Measurement.from_lab_units(0, "seed", 2332, 7, 17.5))
    split = array_fitness([Measurement.from_lab_units(s, "seed", 2332 / 6, 7, 17.5) for s in range(6)])
    ke_ok = abs(ke - 31.96e-3) <= 31.96e-3 * 1e-3
    split_ok = abs(split - 5.33e-3) <= 5.33e-3 * 1e-3 and split < 5.9e-3
    ok = envelope and watertight and ends and zero and ke_ok and split_ok
    report("7a", ok, f"envelope={envelope} watertight={watertight} endpoints={ends} zero-offset={zero}; "
                     f"KE={ke * 1e3:.4f} mJ (31.96); equal split={split * 1e3:.4f} mJ (5.33, < 5.9)")
    assert ok


@pytest.mark.slow
def test_criterion_7b_mock_loop(report):
    cfg = VawtLoopConfig(seed=0)
    result = run_vawt_loop(MockEvaluator(), cfg, variants=("b",))
    trace = result.traces["SCGA-b"]
    bests = result.generation_best["SCGA-b"]
    monotone = all(b2 >= b1 for b1, b2 in zip(bests, bests[1:]))
    turns = result.surrogate_turns["SCGA-b"]
    ok = (len(bests) == 4 and monotone and len(trace) == 480 and cfg.warmup == 360 and turns == 120)
    report("7b", ok, f"best per generation {[round(b * 1e3, 3) for b in bests]} mJ, monotone={monotone}; "
                     f"evaluations {cfg.warmup} warm-up + {turns} surrogate-screened = {len(trace)}")
    assert ok


# ---------------------------------------------------------------- 8


def _csvs(d: Path):
    return sorted(p.name for p in d.glob("*.csv"))


def test_criterion_8_manifest_determinism(tmp_path, report):
    runs = {
        "suite": ("algorithms=CGA-b,CGA-o,SCGA-p\ncells=2:2,6:8\ninstances=2\nruns=2\nbudget=240\n"
                  "checkpoints=200,240\nlambda_m=50\nseed=9\n", []),
        "run": ("algorithm=SCGA-bw\nk=6\nc=8\nbudget=200\nlambda_m=40\ninstance=3\nrun=1\n", []),
        "vawt-loop": ("lambda_m=20\nepochs=20\nscga_generations=1\ncga_generations=1\npop_size=4\n", []),
        "dump-tables": ("n=3\nk=1\nc=1\ns=2\nseed=5\n", []),
    }
    identical, compared = True, 0
    for cmd, (text, extra) in runs.items():
        cfg = tmp_path / f"{cmd}.cfg"
        cfg.write_text(text)
        first, second = tmp_path / f"{cmd}_1", tmp_path / f"{cmd}_2"
        assert cli.main([cmd, "--config", str(cfg), "--out", str(first), *extra]) == 0
        assert cli.main([cmd, "--config", str(first / "manifest.cfg"), "--out", str(second), *extra]) == 0
        names = _csvs(first)
        assert names and names == _csvs(second)
        for n in names:
            compared += 1
            identical &= filecmp.cmp(first / n, second / n, shallow=False)
    report(8, identical, f"{compared} CSV outputs from 4 commands reproduced byte-identically from their manifests")
    assert identical
