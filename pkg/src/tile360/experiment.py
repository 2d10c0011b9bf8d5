"""Train/evaluate runs, (eps, lambda) sweeps and normalized comparison reports.

Result layout for one policy::

    <out>/<policy>/
        split.tsv                 train/test trace names
        summary.tsv, summary.json one row per seed plus mean and std rows
        seed_<s>/episodes/<trace>.tsv
        seed_<s>/curve.tsv, best.*, final.*   (learned policies only)

Summaries are always computed by reading the episode logs back, so
``report`` and ``run`` produce the same numbers from the same files.
"""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import POLICIES as RULE_POLICIES
from .config import LEARNED, ConfigError, ExperimentSpec
from .env import (
    BaselinePredictor,
    EnvConfig,
    ModelPredictor,
    StreamingEnv,
    load_prediction_fixture,
    read_episode_log,
    write_episode_log,
)
from .madrl.trainer import greedy_actor, random_actor, run_episode, train
from .media import ManifestError, NetworkTrace, TraceError, load_manifest, load_trace, load_viewpoint_log

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("mean_qoe", "q1", "q2", "q3", "q4", "freeze_freq")


class ExperimentError(RuntimeError):
    pass


def _require(path: Path | None, what: str) -> Path:
    if path is None or not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def load_traces(directory: Path, offset_mbps: float) -> list[NetworkTrace]:
    _require(directory, "trace directory")
    files = sorted(p for p in directory.iterdir() if p.suffix == ".txt")
    if not files:
        raise ConfigError(f"no .txt traces in {directory}")
    try:
        return [load_trace(p, offset_mbps) for p in files]
    except TraceError as exc:
        raise ConfigError(str(exc)) from exc


def split_traces(traces: Sequence[NetworkTrace], fraction: float, seed: int):
    """Seeded disjoint split; both sides are kept in name order."""
    n = len(traces)
    if n < 2:
        raise ConfigError("need at least two traces to split")
    n_train = min(n - 1, max(1, int(round(fraction * n))))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx, test_idx = sorted(perm[:n_train]), sorted(perm[n_train:])
    return [traces[i] for i in train_idx], [traces[i] for i in test_idx]


def build_predictor(spec: ExperimentSpec, segment_duration_s: float):
    e = spec.env
    if e.predictor == "oracle":
        return load_prediction_fixture(_require(e.predictions, "prediction fixture"))
    log_ = load_viewpoint_log(_require(e.viewpoints, "viewpoint log"))
    if e.predictor == "baseline":
        return BaselinePredictor(log_, e.agents, segment_duration_s)
    from .attention import ViewpointTransformer
    from .sphere import Codebook

    model = ViewpointTransformer.load(_require(e.checkpoint, "model checkpoint"))
    codebook = Codebook.load(_require(e.codebook, "codebook"))
    return ModelPredictor(model, codebook, log_, e.agents, segment_duration_s=segment_duration_s)


def build_env(spec: ExperimentSpec) -> tuple[StreamingEnv, list[NetworkTrace]]:
    try:
        manifest = load_manifest(_require(spec.env.manifest, "manifest"))
    except ManifestError as exc:
        raise ConfigError(str(exc)) from exc
    traces = load_traces(spec.env.traces, spec.env.trace_offset_mbps)
    predictor = build_predictor(spec, manifest.segment_duration_s)
    cfg = EnvConfig(
        manifest=manifest,
        trace=traces[0],
        predictor=predictor,
        weights=spec.weights,
        agents=spec.env.agents,
        history_len=spec.env.history_len,
        max_buffer_s=spec.env.max_buffer_s,
        fov=spec.env.fov,
        seed=spec.seed,
        signed_variation=spec.env.signed_variation,
    )
    try:
        return StreamingEnv(cfg), traces
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- folding logs into summaries ------------------------------------------


def episode_stats(path: Path) -> dict[str, float]:
    d = read_episode_log(path)
    return {
        "mean_qoe": float(np.mean(d["total"])),
        "q1": float(np.mean(d["qoe1"])),
        "q2": float(np.mean(d["qoe2"])),
        "q3": float(np.mean(d["qoe3"])),
        "q4": float(np.mean(d["qoe4"])),
        "freeze_freq": float(np.mean(d["rebuffer_s"] > 0)),
    }


def seed_dirs(bundle: Path) -> list[Path]:
    return sorted((p for p in bundle.glob("seed_*") if (p / "episodes").is_dir()), key=lambda p: int(p.name[5:]))


def fold_bundle(bundle: Path) -> dict:
    """Per-seed means over episodes, then mean and population std over seeds."""
    rows = {}
    for sd in seed_dirs(bundle):
        eps = [episode_stats(p) for p in sorted((sd / "episodes").glob("*.tsv"))]
        if not eps:
            raise ExperimentError(f"no episode logs in {sd}")
        rows[sd.name] = {k: float(np.mean([e[k] for e in eps])) for k in SUMMARY_COLUMNS}
        rows[sd.name]["episodes"] = len(eps)
    if not rows:
        raise ExperimentError(f"no seed_* result directories under {bundle}")
    table = np.array([[r[k] for k in SUMMARY_COLUMNS] for r in rows.values()])
    mean = dict(zip(SUMMARY_COLUMNS, table.mean(axis=0).tolist()))
    std = dict(zip(SUMMARY_COLUMNS, table.std(axis=0).tolist()))
    return {"rows": rows, "mean": mean, "std": std}


def write_summary(bundle: Path, folded: dict) -> None:
    lines = ["row\t" + "\t".join(SUMMARY_COLUMNS) + "\tepisodes"]
    for name, r in folded["rows"].items():
        lines.append(name + "\t" + "\t".join(f"{r[k]:.6f}" for k in SUMMARY_COLUMNS) + f"\t{r['episodes']}")
    for name in ("mean", "std"):
        lines.append(name + "\t" + "\t".join(f"{folded[name][k]:.6f}" for k in SUMMARY_COLUMNS) + "\t")
    (bundle / "summary.tsv").write_text("\n".join(lines) + "\n")
    (bundle / "summary.json").write_text(json.dumps(folded, indent=2, sort_keys=True) + "\n")


# -- run --------------------------------------------------------------------


@dataclass
class RunResult:
    bundle: Path
    policy: str
    summary: dict
    test_traces: tuple[str, ...]


def _actor(spec: ExperimentSpec, env: StreamingEnv, train_traces, seed: int, seed_dir: Path):
    if spec.policy in LEARNED:
        cfg = replace(spec.train, mode=spec.policy, seed=seed)
        result = train(env, cfg, traces=train_traces, out_dir=seed_dir)
        result.policy.save(seed_dir / "final", {"mode": spec.policy, "seed": str(seed)})
        return greedy_actor(result.policy)
    if spec.policy == "random":
        return random_actor(seed)
    return RULE_POLICIES[spec.policy](spec.baselines)


def run(spec: ExperimentSpec, out: Path | None = None) -> RunResult:
    """Train (learned policies) on the train split, then play every test trace once per seed."""
    spec.validate()
    env, traces = build_env(spec)
    train_traces, test_traces = split_traces(traces, spec.split, spec.seed)
    bundle = Path(out) if out is not None else Path(spec.out) / spec.policy
    if bundle.exists():
        # only replace an earlier result bundle, never an arbitrary directory
        if any(bundle.iterdir()) and not (bundle / "split.tsv").exists():
            raise ConfigError(f"{bundle} exists and is not a result bundle; choose another --out")
        shutil.rmtree(bundle)
    bundle.mkdir(parents=True)
    with open(bundle / "split.tsv", "w") as fh:
        fh.write("set\ttrace\n")
        for tag, group in (("train", train_traces), ("test", test_traces)):
            for tr in group:
                fh.write(f"{tag}\t{tr.name}\n")
    for rep in range(spec.repetitions):
        seed = spec.seed + rep
        seed_dir = bundle / f"seed_{seed}"
        (seed_dir / "episodes").mkdir(parents=True)
        log.info("%s seed %d: %d train / %d test traces", spec.policy, seed, len(train_traces), len(test_traces))
        act = _actor(spec, env, train_traces, seed, seed_dir)
        for tr in test_traces:
            episode = run_episode(env, act, tr)
            if not np.all(np.isfinite([r.breakdown.total for r in episode])):
                raise ExperimentError(f"non-finite QoE on trace {tr.name}")
            write_episode_log(episode, seed_dir / "episodes" / f"{tr.name}.tsv")
    folded = fold_bundle(bundle)
    write_summary(bundle, folded)
    return RunResult(bundle, spec.policy, folded, tuple(t.name for t in test_traces))


# -- sweep ------------------------------------------------------------------


def cell_name(eps: float, lam: float) -> str:
    return f"eps{eps:g}_lam{lam:g}"


def sweep(spec: ExperimentSpec, eps_values: Sequence[float], lam_values: Sequence[float], out: Path | None = None) -> dict:
    """One training run per (eps, lambda) cell; curves land in ``curve_<cell>.tsv``.

    Returns ``{(eps, lam): RunResult}``.
    """
    if spec.policy not in LEARNED:
        raise ConfigError("sweep needs a learned policy (mappo or ippo)")
    if not eps_values or not lam_values:
        raise ConfigError("sweep grid sets must be non-empty")
    root = Path(out) if out is not None else Path(spec.out) / f"sweep_{spec.policy}"
    root.mkdir(parents=True, exist_ok=True)
    results: dict = {}
    test_set = None
    rows = ["eps\tlam\tmean_qoe\tstd_qoe"]
    for eps in eps_values:
        for lam in lam_values:
            cell = cell_name(eps, lam)
            cell_spec = replace(spec, train=replace(spec.train, clip_eps=float(eps), lam=float(lam)))
            res = run(cell_spec, out=root / cell)
            if test_set is None:
                test_set = res.test_traces
            assert res.test_traces == test_set, "sweep cells must share the evaluation traces"
            first_seed = seed_dirs(res.bundle)[0]
            shutil.copyfile(first_seed / "curve.tsv", root / f"curve_{cell}.tsv")
            rows.append(f"{eps:g}\t{lam:g}\t{res.summary['mean']['mean_qoe']:.6f}\t{res.summary['std']['mean_qoe']:.6f}")
            results[(float(eps), float(lam))] = res
    (root / "sweep.tsv").write_text("\n".join(rows) + "\n")
    return results


# -- report -----------------------------------------------------------------


def find_bundles(result_dir: Path) -> list[Path]:
    if seed_dirs(result_dir):
        return [result_dir]
    return sorted(p for p in result_dir.iterdir() if p.is_dir() and seed_dirs(p))


def report(result_dir: str | Path) -> list[dict]:
    """Fold every bundle under ``result_dir`` and normalize by the best mean QoE.

    Writes ``report.tsv`` and ``report.json`` into ``result_dir``. The
    normalized column is NaN when the best mean QoE is not positive.
    """
    root = Path(result_dir)
    if not root.is_dir():
        raise ConfigError(f"result directory not found: {root}")
    bundles = find_bundles(root)
    if not bundles:
        raise ConfigError(f"no result bundles under {root}")
    entries = []
    for b in bundles:
        f = fold_bundle(b)
        entries.append({"policy": b.name, **f["mean"], "std_qoe": f["std"]["mean_qoe"], "seeds": len(f["rows"])})
    best = max(e["mean_qoe"] for e in entries)
    if best <= 0:
        log.warning("best mean QoE %.6f is not positive; normalized column is NaN", best)
    for e in entries:
        e["normalized"] = e["mean_qoe"] / best if best > 0 else float("nan")
    cols = ("normalized", "mean_qoe", "std_qoe", "q1", "q2", "q3", "q4", "freeze_freq")
    lines = ["policy\t" + "\t".join(cols) + "\tseeds"]
    for e in entries:
        lines.append(e["policy"] + "\t" + "\t".join(f"{e[c]:.6f}" for c in cols) + f"\t{e['seeds']}")
    (root / "report.tsv").write_text("\n".join(lines) + "\n")
    (root / "report.json").write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
    return entries
