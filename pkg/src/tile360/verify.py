"""Built-in oracle checks run by ``tile360 verify``.

Each check compares production code against ``oracles`` or a hand value and
returns ``(passed, detail)``. ``full=True`` adds the toy training runs.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from . import _kernels, oracles
from .baselines import bb_select, mpc_plan
from .madrl.nets import MLP
from .madrl.ppo import discounted_returns, gae, ppo_clip_terms
from .media import NetworkTrace, download_time
from .qoe import QoEWeights, qoe_total, rebuffer_time
from .regions import partition, viewport_tiles
from .sphere import PredictionSet, latlon_to_vec


def check_qoe(rng) -> tuple[bool, str]:
    b = qoe_total(QoEWeights(1, 1, 1, 1), [0.7, 0.3], [10, 5], [8, 5], 0.0)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        psi = rng.dirichlet(np.ones(n))
        q, qp = rng.uniform(0, 40, n), rng.uniform(0, 40, n)
        w, reb = rng.uniform(0, 3, 4), rng.uniform(0, 5)
        got = qoe_total(QoEWeights(*w), psi, q, qp, reb)
        ref = oracles.qoe_reference(w, psi, q, qp, reb)
        worst = max(worst, max(abs(x - y) for x, y in zip((*got.terms(), got.total), ref)))
    ok = abs(b.total - 6.05) < 1e-12 and worst <= 1e-12
    return ok, f"worked example {b.total:.12f}, max deviation {worst:.1e}"


def check_rebuffer(rng) -> tuple[bool, str]:
    cases = [((0.5, 2.0, 1.0), 0.0), ((3.0, 1.0, 1.0), 3.0), ((0.0, 0.4, 1.0), 0.6)]
    ok = all(abs(rebuffer_time(*a) - e) <= 1e-12 for a, e in cases)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 8))
        times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.2, 3.0, k - 1))])
        rates = rng.uniform(0.5, 20.0, k)
        tr = NetworkTrace(times, rates)
        size, start = rng.uniform(0, 60), rng.uniform(0, 30)
        ref = oracles.piecewise_download_time(size, times, rates, start)
        worst = max(worst, abs(download_time(size, tr, start) - ref))
    return ok and worst <= 1e-9, f"hand cases {'ok' if ok else 'FAIL'}, download max deviation {worst:.1e}"


def check_gae(rng) -> tuple[bool, str]:
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        T = int(rng.integers(1, 21))
        r, v = rng.normal(size=T), rng.normal(size=T)
        boot, gamma, lam = rng.normal(), rng.uniform(0.5, 1.0), rng.uniform(0, 1)
        worst = max(worst, np.max(np.abs(gae(r, v, boot, gamma, lam) - oracles.gae_double_sum(r, v, boot, gamma, lam))))
        ident = gae(r, v, boot, gamma, 1.0) - (discounted_returns(r, boot, gamma) - v)
        worst = max(worst, np.max(np.abs(ident)))
    dt = time.perf_counter() - t0
    return worst <= 1e-9 and dt < 5, f"max deviation {worst:.1e} in {dt:.2f}s"


def check_ppo(rng) -> tuple[bool, str]:
    hand = [ppo_clip_terms([math.log(1.5)], [0.0], [1.0], 0.2)[0][0], ppo_clip_terms([math.log(0.5)], [0.0], [-1.0], 0.2)[0][0]]
    ok = abs(hand[0] - 1.2) < 1e-12 and abs(hand[1] + 0.8) < 1e-12
    lp_old = rng.normal(size=2000)
    lp_new = lp_old + rng.normal(0, 0.5, 2000)
    adv = rng.normal(size=2000)
    eps = 0.2
    terms, _, ratio = ppo_clip_terms(lp_new, lp_old, adv, eps)
    ref = np.array([oracles.clip_surrogate_reference(r, a, eps) for r, a in zip(ratio, adv)])
    ok = ok and np.array_equal(terms, ref)
    return ok, f"hand cases {hand[0]:.12f}, {hand[1]:.12f}; definition check on 2000 samples"


def check_gradients(rng) -> tuple[bool, str]:
    worst = 0.0
    for s in range(10):
        for head in ("softmax", "linear"):
            out = 4 if head == "softmax" else 1
            net = MLP((5, 8, 8, out), seed=s, head=head)
            x = rng.normal(size=(6, 5))
            w = rng.normal(size=(6, out))

            def f():
                c = net.forward(x)
                return float(np.sum(w * (c.probs if head == "softmax" else c.output)))

            analytic = net.backward(net.forward(x), w)
            numeric = oracles.central_difference(f, net.parameters())
            worst = max(worst, oracles.relative_error(analytic, numeric))
    return worst <= 1e-4, f"actor/critic max relative error {worst:.1e} over 20 checks"


def check_partition(rng) -> tuple[bool, str]:
    center = viewport_tiles(latlon_to_vec(0.0, 0.0), 6, 12, (100, 100))
    oracle = oracles.footprint_by_sampling(0.0, 0.0, 6, 12, (100, 100))
    ok = center == oracle and len(center) == 16
    for _ in range(2000):
        n = int(rng.integers(1, 5))
        lat = rng.integers(-320, 321, n) * 0.25
        lon = rng.integers(-720, 721, n) * 0.25
        probs = np.sort(rng.dirichlet(np.ones(n)))[::-1]
        ps = PredictionSet(latlon_to_vec(lat, lon), probs)
        a = partition(ps, 6, 12)
        fps = [viewport_tiles(p, 6, 12) for p in ps.first_points()]
        regions, rest = oracles.partition_reference(fps, list(probs), 72)
        tiles = [t for r in a.regions for t in r] + list(a.rest)
        ok = ok and list(a.regions) == regions and a.rest == rest and sorted(tiles) == list(range(72))
    return ok, f"centre footprint {len(center)} tiles; 2000 random partitions"


def check_baselines(rng) -> tuple[bool, str]:
    ladder = (1, 2.5, 5, 8, 16, 35)
    ok = all(bb_select(b, ladder) == 0 for b in rng.uniform(0, 4.999, 200))
    ok = ok and all(bb_select(b, ladder) == 5 for b in rng.uniform(15.001, 60, 200))
    w = QoEWeights(1, 1, 1, 1)
    for _ in range(200):
        n = int(rng.integers(1, 4))
        psi = np.sort(rng.dirichlet(np.ones(n)))[::-1]
        sizes = np.sort(rng.uniform(0.1, 10, (n, 6)), axis=1)
        rest, buf, thr = rng.uniform(0, 5), rng.uniform(0, 20), rng.uniform(1, 60)
        prev = None if rng.random() < 0.3 else rng.choice(ladder, n)
        got, _ = mpc_plan(sizes, rest, psi, ladder, buf, prev, thr, w, 1)
        ref = oracles.mpc_single_step_reference(sizes, rest, psi, ladder, buf, prev, thr, (1, 1, 1, 1), 1.0)
        ok = ok and got == ref
    return ok, "BB edges on 400 buffers; MPC H=1 on 200 states"


def check_backends(rng) -> tuple[bool, str]:
    c, p = _kernels.compiled_backend, _kernels.python_backend
    if c is None:
        return True, "compiled backend not built; python fallback only"
    r, v = rng.normal(size=50), rng.normal(size=50)
    d = np.max(np.abs(c.gae(r, v, 0.3, 0.99, 0.95) - p.gae(r, v, 0.3, 0.99, 0.95)))
    pts = rng.normal(size=(200, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    cen = pts[:10].copy()
    same = np.array_equal(c.assign_nearest(pts, cen), p.assign_nearest(pts, cen))
    return d <= 1e-12 and same, f"active backend {_kernels.BACKEND}; gae deviation {d:.1e}"


def check_toy_convergence(rng) -> tuple[bool, str]:
    from .fixtures import greedy_optimum, toy_environment, toy_train_config
    from .madrl.trainer import greedy_actor, run_episode, train

    env = toy_environment()
    opt, _ = greedy_optimum(env)
    res = train(env, toy_train_config())
    ep = run_episode(env, greedy_actor(res.policy))
    ratio = float(np.mean([r.breakdown.total for r in ep])) / opt
    return ratio >= 0.95, f"MAPPO greedy reaches {ratio:.3f} of optimum {opt:.4f}"


CHECKS: dict[str, Callable] = {
    "qoe": check_qoe,
    "rebuffer": check_rebuffer,
    "gae": check_gae,
    "ppo-clip": check_ppo,
    "gradients": check_gradients,
    "partition": check_partition,
    "baselines": check_baselines,
    "kernels": check_backends,
}


def run_checks(seed: int = 0, full: bool = False, echo: Callable[[str], None] = print) -> bool:
    checks = dict(CHECKS)
    if full:
        checks["toy-convergence"] = check_toy_convergence
    all_ok = True
    for name, fn in checks.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(np.random.default_rng(seed))
        except Exception as exc:  # report and keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name:<16} {detail} ({time.perf_counter() - t0:.1f}s)")
    return all_ok
