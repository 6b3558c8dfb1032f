"""End-to-end acceptance checks; each test prints one PASS/FAIL line with its measurement.

Instance seeds are disjoint from the ones used to pick the default epsilon.
"""

import itertools

import numpy as np
from scipy import stats

from rltsp import agent, neural, policy
from rltsp.agent import ActorCritic, EpisodeBatch
from rltsp.cli import sweep_table
from rltsp.solver import SolverConfig, solve, timing_report
from rltsp.tsp_core import held_karp, random_instance, reference_length


def _gaps(n, seeds):
    gaps = []
    for s in seeds:
        inst = random_instance(n, s)
        opt = held_karp(inst)[1]
        r = solve(inst, SolverConfig(seed=s))
        assert r.ok, r.error
        gaps.append(100.0 * (r.best_length / opt - 1.0))
    return np.array(gaps)


def test_c1_near_optimal_n10(criterion):
    gaps = _gaps(10, range(20))
    mean = gaps.mean()
    criterion(1, "n=10 mean gap vs exact <= 2%", mean <= 2.0,
              f"mean gap {mean:.3f}% over 20 instances (max {gaps.max():.3f}%)")


def test_c2_near_optimal_n20(criterion):
    gaps = _gaps(20, range(100, 120))
    mean = gaps.mean()
    criterion(2, "n=20 mean gap vs exact <= 5%", mean <= 5.0,
              f"mean gap {mean:.3f}% over 20 instances (max {gaps.max():.3f}%)")


def test_c3_n50_vs_two_opt(criterion):
    best, ref = [], []
    for s in range(200, 210):
        inst = random_instance(50, s)
        best.append(solve(inst, SolverConfig(seed=s)).best_length)
        ref.append(reference_length(inst, "two-opt")[0])
    ratio = np.mean(best) / np.mean(ref)
    criterion(3, "n=50 mean length <= 1.10 x two-opt(NN) mean", ratio <= 1.10,
              f"mean {np.mean(best):.4f} vs two-opt {np.mean(ref):.4f}, ratio {ratio:.4f}")


def test_c4_learning_beats_luck(criterion):
    wins, ties = 0, 0
    seeds = range(300, 320)
    for s in seeds:
        inst = random_instance(10, s)
        full = solve(inst, SolverConfig(seed=s)).best_length
        frozen = solve(inst, SolverConfig(seed=s, frozen=True, epsilon=0.0)).best_length
        wins += full < frozen
        ties += full == frozen
    rate = wins / len(seeds)
    criterion(4, "full method strictly shorter than frozen uniform in >= 80% of pairs",
              rate >= 0.80,
              f"{wins}/{len(seeds)} wins ({100 * rate:.0f}%), {ties} exact ties")


def _fd_rel_error(net, f, grads, h=1e-6):
    num = []
    for p in net.params:
        flat = p.reshape(-1)
        g = np.empty(flat.size)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = f()
            flat[k] = old - h
            down = f()
            flat[k] = old
            g[k] = (up - down) / (2 * h)
        num.append(g)
    a = np.concatenate([x.ravel() for x in grads])
    b = np.concatenate(num)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def test_c5_gradients_match_finite_differences(criterion):
    errors = {}
    for n in (5, 10, 20):
        inst = random_instance(n, n)
        ac = ActorCritic.create(n, n)
        rng = np.random.default_rng(n)
        batch = EpisodeBatch.from_tours(inst, [rng.permutation(n) for _ in range(4)])
        base = agent.critic_predict(ac, batch)
        grads, _ = agent.actor_gradient(ac, batch, base)
        errors[("actor", n)] = _fd_rel_error(
            ac.actor, lambda: agent.actor_gradient(ac, batch, base)[1], grads
        )

        def mse():
            pred, _ = neural.forward(ac.critic, batch.encodings)
            return float(np.mean((pred[:, 0] - batch.lengths) ** 2))

        pred, trace = neural.forward(ac.critic, batch.encodings)
        cg = neural.backward(ac.critic, trace, (2.0 / len(batch)) * (pred - batch.lengths[:, None]))
        errors[("critic", n)] = _fd_rel_error(ac.critic, mse, cg)
    worst = max(errors.values())
    detail = ", ".join(f"{k}{n}={e:.1e}" for (k, n), e in errors.items())
    criterion(5, "analytic vs central-difference gradients within 1e-4", worst <= 1e-4, detail)


def test_c6_probability_law(criterion):
    worst = 0.0
    for n in range(3, 8):
        rng = np.random.default_rng(n)
        p = rng.random((n, n)) + 0.05
        np.fill_diagonal(p, 0)
        P = policy.TransitionMatrix(p / p.sum(axis=1, keepdims=True))
        rest = range(1, n)
        total = sum(policy.tour_probability(P, (0, *t)) for t in itertools.permutations(rest))
        worst = max(worst, abs(total - 1.0))

    rng = np.random.default_rng(55)
    p = rng.random((5, 5)) + 0.05
    np.fill_diagonal(p, 0)
    P = policy.TransitionMatrix(p / p.sum(axis=1, keepdims=True))
    perms = [(0, *t) for t in itertools.permutations(range(1, 5))]
    expected = np.array([policy.tour_probability(P, t) for t in perms]) * 100_000
    tours = policy.sample_episodes(P, np.zeros(100_000, dtype=np.intp), rng)
    index = {t: i for i, t in enumerate(perms)}
    observed = np.bincount([index[tuple(t)] for t in tours.tolist()], minlength=len(perms))
    pvalue = stats.chisquare(observed, expected).pvalue
    ok = worst <= 1e-9 and pvalue >= 0.01
    criterion(6, "tour probabilities sum to 1 (n<=7) and sampling matches them (chi2, n=5)",
              ok, f"max |sum-1| {worst:.1e}, chi2 p-value {pvalue:.3f} on 1e5 samples")


def test_c7_invariants(criterion):
    rng = np.random.default_rng(7)
    n = 10
    P = policy.init_uniform(n, forbidden=[(0, 1), (4, 7)])
    worst = 0.0
    for _ in range(10_000):
        tour = rng.permutation(n)
        pairs = [(i, j) for i, j in zip(tour, np.roll(tour, -1)) if P.allowed[i, j]]
        P = policy.apply_update(P, rng.random(n) * rng.choice([1.0, 3.0]), pairs,
                                float(rng.uniform(1e-6, 1 - 1e-6)))
        worst = max(worst, float(np.abs(P.p.sum(axis=1) - 1).max()))
    P.check(tol=1e-9)

    monotone = True
    for s in range(8):
        r = solve(random_instance(10 + s, 900 + s), SolverConfig(seed=s, steps=80))
        monotone &= bool(np.all(np.diff(r.history_array()[:, 1]) <= 0))

    inst = random_instance(15, 42)
    a = solve(inst, SolverConfig(seed=9, steps=60))
    b = solve(inst, SolverConfig(seed=9, steps=60))
    same = np.array_equal(a.history_array(), b.history_array()) and np.array_equal(
        a.final_matrix.p, b.final_matrix.p
    )
    ok = worst <= 1e-9 and monotone and same
    criterion(7, "row stochasticity, incumbent monotonicity, seed determinism", ok,
              f"max row error {worst:.1e} after 1e4 updates, monotone={monotone}, "
              f"bitwise identical={same}")


def test_c8_sweep_trends(criterion):
    samples, steps = [10, 50, 200, 400], [50, 150, 300]
    insts = [random_instance(20, s) for s in range(400, 410)]
    table = sweep_table(insts, samples, steps, SolverConfig(seed=0))
    grid = np.array([[table[(T, s)] for s in steps] for T in samples])
    down_samples = bool(np.all(np.diff(grid, axis=0) <= 0))
    down_steps = bool(np.all(np.diff(grid, axis=1) <= 0))
    corner = sweep_table(insts, [1], [1], SolverConfig(seed=0))[(1, 1)]
    dominance = corner >= table[(400, 300)]
    rows = "; ".join(f"T={T}: " + " ".join(f"{g:.2f}" for g in row) for T, row in zip(samples, grid))
    criterion(8, "median sweep gap nonincreasing along samples and steps",
              down_samples and down_steps and dominance,
              f"median % gaps by steps {steps}: {rows}; (1,1) cell {corner:.1f}")


def test_c9_timing_trends(criterion):
    rep = {}
    for n in (20, 50):
        runs = [timing_report(solve(random_instance(n, s), SolverConfig(seed=s, steps=60)))
                for s in range(3)]
        rep[n] = {k: float(np.median([r[k] for r in runs])) for k in ("sampling", "training")}
    grows = rep[50]["sampling"] > rep[20]["sampling"]
    ratio = rep[50]["training"] / rep[20]["training"]
    flat = 0.5 <= ratio <= 2.0
    criterion(9, "per-step sampling grows 20->50, training within 2x", grows and flat,
              f"sampling {1e3 * rep[20]['sampling']:.2f} -> {1e3 * rep[50]['sampling']:.2f} ms, "
              f"training {1e3 * rep[20]['training']:.2f} -> {1e3 * rep[50]['training']:.2f} ms "
              f"(ratio {ratio:.2f})")
