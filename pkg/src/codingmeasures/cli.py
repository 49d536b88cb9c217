"""Command line entry point: config-driven experiments and run reports.

    codingmeasures run --config cfg.json [--out DIR] [--seed-override N] [--threads N]
    codingmeasures report out1/manifest.json out2/manifest.json ...

Every random stream derives from the root seed and a stream name, so each
stage of a pipeline is reproducible on its own.
"""

import argparse
import hashlib
import json
import sys
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, coding, ergodic_stats, graph_transform as gt, measures, shift
from .dynamics import ProductMap, map_from_json
from .errors import (BasePointRejected, ConditionsViolated, ConfigError, ContainmentDomainError,
                     EnumerationCapExceeded, IncompleteLevel, NumericalFailure, ResolutionFailure)

SCHEMA_VERSION = 1
COMMANDS = ("build-tree", "sample-measure", "entropy-report", "exponents", "inequalities",
            "correlations", "asip-diagnostics", "graph-transform", "chain-demo")
NEEDS_MAP = {"build-tree", "sample-measure", "entropy-report", "exponents", "inequalities"}
NEEDS_POTENTIAL = NEEDS_MAP - {"build-tree"} | {"correlations", "asip-diagnostics"}
DETERMINISTIC = {"graph-transform", "chain-demo"}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BASEPOINT = 0, 2, 3, 4


def stream(seed, name):
    """Independent generator for the named sub-stream of a root seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),)))


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    output_dir: str
    map: object = None
    potential: object = None
    base_point: object = "random"
    clearance: float = 0.02
    depth: int = 12
    samples: int = 10000
    theta: float = 0.3
    epsilon: float = 0.1
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _num(obj, key, default, kind=float, lo=None):
    val = obj.get(key, default)
    try:
        val = kind(val)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {val!r}")
    if lo is not None and val < lo:
        raise ConfigError(key, f"must be >= {lo}")
    return val


def _parse_point(bp, f):
    if bp == "random":
        return "random"
    try:
        if isinstance(f, ProductMap):
            return np.array([complex(*bp[0]), complex(*bp[1])])
        return complex(*bp)
    except (TypeError, ValueError):
        raise ConfigError("base_point", "expected \"random\" or [re, im] (pairs for products)")


def parse_config(raw, out=None, seed_override=None):
    """Validate a config dictionary; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a JSON object")
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}")
    if seed_override is not None:
        raw = dict(raw, seed=seed_override)
    if "seed" not in raw and command not in DETERMINISTIC:
        raise ConfigError("seed", "a seed is required for this command")
    cfg = ExperimentConfig(command=command, seed=_num(raw, "seed", 0, int, 0),
                           output_dir=out or raw.get("output_dir") or "out", raw=raw)
    if command in NEEDS_MAP:
        if "map" not in raw:
            raise ConfigError("map", "required for this command")
        try:
            cfg.map = map_from_json(raw["map"])
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError("map", str(exc))
        cfg.base_point = _parse_point(raw.get("base_point", "random"), cfg.map)
    if command in NEEDS_POTENTIAL:
        if "potential" not in raw:
            raise ConfigError("potential", "required for this command")
        try:
            cfg.potential = shift.potential_from_json(raw["potential"])
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            name, sep, rest = str(exc).partition(":")
            if sep and " " not in name:
                raise ConfigError(name, rest.strip())
            raise ConfigError("potential", str(exc))
        if cfg.map is not None and cfg.potential.alphabet != cfg.map.n_symbols:
            raise ConfigError("potential", f"needs {cfg.map.n_symbols} symbols for this map")
    cfg.clearance = _num(raw, "clearance", 0.02, float, 0.0)
    cfg.depth = _num(raw, "depth", 12 if command != "build-tree" else 8, int, 1)
    cfg.samples = _num(raw, "samples", 10000, int, 1)
    cfg.theta = _num(raw, "theta", 0.3, float, 0.0)
    cfg.epsilon = _num(raw, "epsilon", 0.1, float, 0.0)
    cfg.params = raw.get("params", {})
    if not isinstance(cfg.params, dict):
        raise ConfigError("params", "must be an object")
    return cfg


def config_hash(raw):
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# -- pipelines ---------------------------------------------------------------------

class _Run:
    def __init__(self, cfg):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.summary = {}

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def write_json(self, name, obj):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def _base(run):
    cfg = run.cfg
    rng = stream(cfg.seed, "base-point")
    if isinstance(cfg.base_point, str):
        z, paths = coding.choose_base_point(cfg.map, rng, cfg.clearance)
    else:
        z = cfg.base_point
        paths = coding.build_base_paths(cfg.map, z, cfg.clearance, rng)
    run.summary["base_point"] = np.atleast_1d(z).tolist() if not isinstance(z, complex) else [z.real, z.imag]
    return z, paths


def _tree_for(cfg, z, paths, depth):
    """Full tree if small enough, else a partial tree that keeps paths for reuse."""
    M = cfg.map.n_symbols
    full = M ** depth <= 2 ** 16
    level = depth if full else max(1, int(np.log(2 ** 14) / np.log(M)))
    tree = coding.CodingTree(cfg.map, z, paths, keep_paths=not full).extend_to(level)
    return tree


def _cloud(run, depth=None, name="cloud"):
    cfg = run.cfg
    depth = cfg.depth if depth is None else depth
    z, paths = _base(run)
    tree = _tree_for(cfg, z, paths, depth)
    cloud = measures.sample_cloud(cfg.map, paths, cfg.potential, depth, cfg.samples,
                                  stream(cfg.seed, name), tree=tree, seed=cfg.seed)
    bad = np.isnan(cloud.points).reshape(cloud.points.shape[0], -1).any(axis=1)
    if bad.any():
        raise IncompleteLevel(f"{int(bad.sum())} sampled branches failed to lift")
    return cloud


def cmd_build_tree(run):
    cfg = run.cfg
    z, paths = _base(run)
    tree = coding.CodingTree(cfg.map, z, paths)
    levels = []
    for n in range(1, cfg.depth + 1):
        if n > 1:
            tree.extend()
        diam = tree.path_diameters()
        levels.append({"level": n, "compatibility_defect": tree.compatibility_defect(n) if n > 1 else 0.0,
                       "min_separation": tree.min_separation(n), "failed": int(tree.failed_words(n).size),
                       "max_diameter": float(np.nanmax(diam)), "median_diameter": float(np.nanmedian(diam))})
    ns = [lv["level"] for lv in levels if lv["level"] >= min(4, cfg.depth)]
    med = [lv["median_diameter"] for lv in levels if lv["level"] >= min(4, cfg.depth)]
    c_fit, rho = coding.fit_geometric_rate(ns, med, cfg.map.degree)
    c = float(cfg.params.get("c", 10 * c_fit if np.isfinite(c_fit) else 1.0))
    rho_use = float(cfg.params.get("rho", rho if np.isfinite(rho) else 0.0))
    pot = cfg.potential if cfg.potential is not None else None
    if "potential" in cfg.raw:
        pot = shift.potential_from_json(cfg.raw["potential"])
    diag = coding.level_diameter_stats(tree, cfg.theta, c, rho_use, pot)
    coding.write_level_csv(tree, run.path("tree_level.csv"), diag.diameters)
    run.write_json("tree_diagnostics.json", {
        "levels": levels, "fit": {"c": c_fit, "rho": rho}, "threshold": diag.threshold,
        "card_bad": diag.card_bad, "card_bound": diag.card_bound, "card_ok": diag.card_ok,
        "bad_mass": diag.bad_mass, "mass_bound": diag.mass_bound, "mass_ok": diag.mass_ok})
    run.summary.update({"depth": cfg.depth, "rho_hat": rho, "card_ok": diag.card_ok,
                        "max_compatibility_defect": max(lv["compatibility_defect"] for lv in levels)})


def _entropy_summary(run):
    run.summary["entropy"] = shift.entropy(run.cfg.potential)


def cmd_sample_measure(run):
    cfg = run.cfg
    cloud = _cloud(run)
    cloud.to_csv(run.path("cloud.csv"))
    win = tuple(cfg.params.get("window", (-2.0, 2.0, -2.0, 2.0)))
    res = tuple(cfg.params.get("resolution", (128, 128)))
    factors = 2 if cloud.is_product else 1
    for k in range(factors):
        grid = measures.density_grid(cloud, win, res, factor=k)
        sfx = "" if factors == 1 else f"_{k + 1}"
        grid.to_pgm(run.path(f"density{sfx}.pgm"))
        grid.to_csv(run.path(f"density{sfx}.csv"))
    if cloud.is_product:
        mg = measures.modulus_grid(cloud, (0.0, 2.0, 0.0, 2.0), res)
        mg.to_pgm(run.path("density_modulus.pgm"))
        mg.to_csv(run.path("density_modulus.csv"))
    _entropy_summary(run)
    run.summary["max_abs_moment"] = float(np.max(np.abs(measures.moments(cloud))))
    run.summary["samples"] = cfg.samples


def cmd_entropy_report(run):
    cfg = run.cfg
    n = int(cfg.params.get("n", 8))
    r = float(cfg.params.get("r", 0.05))
    depth = int(cfg.params.get("cloud_depth", 16))
    cloud = _cloud(run, depth, "entropy-cloud")
    est = ergodic_stats.brin_katok_entropy(cfg.map, cloud, n, r)
    h = shift.entropy(cfg.potential)
    run.write_csv("entropy.csv", ["entropy_formula", "brin_katok", "brin_katok_naive", "n", "r",
                                  "references", "zero_balls"],
                  [[h, est.entropy, est.naive, n, r, est.n_refs, est.zero_balls]])
    run.summary.update({"entropy": h, "brin_katok": est.entropy})


def _exponents(run):
    cloud = _cloud(run)
    return ergodic_stats.lyapunov(run.cfg.map, cloud)


def cmd_exponents(run):
    rep = _exponents(run)
    run.write_csv("exponents.csv", ["index", "exponent", "stderr"],
                  [[i + 1, v, s] for i, (v, s) in enumerate(zip(rep.exponents, rep.stderr))])
    _entropy_summary(run)
    run.summary.update({"exponents": rep.exponents.tolist(), "excluded_mass": rep.excluded_mass})


def cmd_inequalities(run):
    cfg = run.cfg
    rep = _exponents(run)
    h = shift.entropy(cfg.potential)
    k = 2 if isinstance(cfg.map, ProductMap) else 1
    ineq = ergodic_stats.inequality_report(h, rep, cfg.map.degree, k)
    gate = ergodic_stats.tau_gate(cfg.potential, cfg.map.degree, k, cfg.theta)
    with open(run.path("inequalities.json"), "w", encoding="utf-8") as fh:
        fh.write(ineq.to_json() + "\n")
    with open(run.path("inequalities.txt"), "w", encoding="utf-8") as fh:
        fh.write(ineq.table() + "\n")
    checked = [r for r in ineq.records if r.applicable and r.passed is not None]
    run.summary.update({"entropy": h, "exponents": rep.exponents.tolist(),
                        "inequalities_passed": sum(r.passed for r in checked),
                        "inequalities_checked": len(checked),
                        "dim_bound": ineq.record("dim_bound").lhs,
                        "tau": gate.tau, "admissible": gate.admissible})


def _observable(cfg):
    spec = cfg.params.get("observable")
    M = cfg.potential.alphabet
    if spec is None:
        return shift.CylinderObservable.indicator((0,), M)
    try:
        return shift.CylinderObservable(int(spec["depth"]), np.asarray(spec["values"], float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("params.observable", str(exc))


def cmd_correlations(run):
    cfg = run.cfg
    mu = shift.gibbs_measure(cfg.potential)
    chi = _observable(cfg)
    n_max = int(cfg.params.get("n_max", 10))
    rng = stream(cfg.seed, "correlations")
    rows, corr = [], []
    for n in range(0, n_max + 1):
        c = shift.correlation(mu, chi, chi, n, rng)
        gap = shift.mixing_gap(mu, (0,), (0,), n) if n >= 1 else float("nan")
        rows.append([n, c.value, c.stderr, gap])
        corr.append(c.value)
    c0, rate = shift.fit_decay(range(1, n_max + 1), corr[1:])
    run.write_csv("correlations.csv", ["n", "correlation", "stderr", "mixing_gap"], rows)
    lo, hi = shift.gibbs_bounds_check(mu, int(cfg.params.get("gibbs_n_max", 6)))
    run.summary.update({"entropy": shift.entropy(cfg.potential), "pressure": mu.pressure,
                        "decay_rate": rate, "gibbs_c1": lo, "gibbs_c2": hi})


def cmd_asip(run):
    cfg = run.cfg
    chi = _observable(cfg)
    n = int(cfg.params.get("n", 1000))
    est = shift.birkhoff_sigma(cfg.potential, chi, n, cfg.samples, stream(cfg.seed, "asip"))
    run.write_csv("asip.csv", ["n", "samples", "sigma", "stderr", "clt_gap", "mean_subtracted"],
                  [[n, cfg.samples, est.sigma, est.stderr, est.clt_gap, est.mean_subtracted]])
    run.summary.update({"entropy": shift.entropy(cfg.potential), "sigma": est.sigma,
                        "clt_gap": est.clt_gap})


def _local_maps(cfg):
    g = cfg.params
    try:
        A = complex(g.get("A", 2.0))
        B = complex(g.get("B", 0.5))
        p = complex(g.get("perturbation", 0.01))
        R = float(g.get("radius", 1.0))
    except (TypeError, ValueError) as exc:
        raise ConfigError("params", str(exc))
    try:
        split = gt.LinearSplit(A, B)
    except Exception as exc:
        raise ConfigError("params.A", str(exc))

    def g_fn(x, y):
        return A * x + p * y ** 2, B * y + p * x * y

    return gt.LocalMap(g_fn, split, R, R), R


def _phi(cfg, R):
    spec = cfg.params.get("phi", {"type": "zero"})
    kind = spec.get("type", "zero")
    if kind == "zero":
        return gt.LipGraph.zero(R)
    if kind == "linear":
        return gt.LipGraph.constant_plus_linear(complex(spec.get("offset", 0.0)), complex(spec.get("c", 0.0)), R)
    raise ConfigError("params.phi", f"unknown type {kind!r}")


def cmd_graph_transform(run):
    cfg = run.cfg
    lm, R = _local_maps(cfg)
    gamma0 = float(cfg.params.get("gamma0", 1.0))
    mode = cfg.params.get("mode", "shrink")
    phi = _phi(cfg, R)
    cond = gt.check_conditions(lm.split, gamma0, lm.delta, cfg.epsilon)
    psi, stats = gt.backward_transform(lm, phi, mode, cfg.epsilon)
    rep = gt.verify_graph(lm, psi, phi, gamma0, psi0_bound=R if mode == "offset" else None)
    gt.write_graph_csv(psi, run.path("graph.csv"))
    run.write_json("graph_report.json", {"conditions": cond.__dict__, "delta": lm.delta,
                                         "stats": stats.__dict__, "verification": rep.__dict__})
    run.summary.update({"lip": rep.lip, "containment_residual": rep.containment_residual,
                        "conditions": [cond.a, cond.b, cond.c, cond.d]})


def cmd_chain_demo(run):
    cfg = run.cfg
    lm, R = _local_maps(cfg)
    steps = int(cfg.params.get("steps", 10))
    gamma0 = float(cfg.params.get("gamma0", 1.0))
    mode = cfg.params.get("mode", "shrink")
    res = gt.transform_chain([lm] * steps, _phi(cfg, R), cfg.epsilon, gamma0, mode)
    run.write_json("chain_log.json", res.log)
    gt.write_graph_csv(res.psi0, run.path("psi0.csv"))
    run.summary.update({"steps": steps, "final_radius": res.radii[0],
                        "max_lip": max(e["lip"] for e in res.log),
                        "max_containment_residual": max(e["containment_residual"] for e in res.log)})


PIPELINES = {"build-tree": cmd_build_tree, "sample-measure": cmd_sample_measure,
             "entropy-report": cmd_entropy_report, "exponents": cmd_exponents,
             "inequalities": cmd_inequalities, "correlations": cmd_correlations,
             "asip-diagnostics": cmd_asip, "graph-transform": cmd_graph_transform,
             "chain-demo": cmd_chain_demo}


def run(cfg, threads=1):
    """Execute one configured pipeline; writes outputs and ``manifest.json``."""
    t0 = time.perf_counter()
    job = _Run(cfg)
    PIPELINES[cfg.command](job)
    manifest = {"schema_version": SCHEMA_VERSION, "command": cfg.command,
                "config_sha256": config_hash(cfg.raw), "seed": cfg.seed,
                "version": __version__, "threads": threads,
                "wall_time_s": time.perf_counter() - t0,
                "files": sorted(job.files), "summary": job.summary}
    with open(job.out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return manifest


def report(manifests):
    """One summary row per manifest: command, entropy, exponents, inequality passes."""
    if not manifests:
        raise ConfigError("manifests", "at least one manifest is required")
    versions = {m.get("schema_version") for m in manifests}
    if len(versions) != 1:
        raise ConfigError("schema_version", f"incompatible schema versions {sorted(map(str, versions))}")
    header = f"{'run':<4} {'command':<18} {'entropy':>10} {'exponents':<24} {'inequalities':>12}"
    lines = [header, "-" * len(header)]
    for i, m in enumerate(manifests):
        s = m.get("summary", {})
        h = s.get("entropy")
        ex = s.get("exponents")
        ineq = (f"{s['inequalities_passed']}/{s['inequalities_checked']}"
                if "inequalities_passed" in s else "-")
        lines.append(f"{i:<4} {m.get('command', '?'):<18} "
                     f"{(f'{h:.6f}' if h is not None else '-'):>10} "
                     f"{(', '.join(f'{v:.4f}' for v in ex) if ex else '-'):<24} {ineq:>12}")
    return "\n".join(lines)


def build_parser():
    p = argparse.ArgumentParser(prog="codingmeasures", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="action", required=True)
    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True, help="JSON experiment config")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed-override", type=int, help="replace the config seed")
    r.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    s = sub.add_parser("report", help="summarize run manifests")
    s.add_argument("manifests", nargs="+", help="manifest.json files or run directories")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.action == "report":
            loaded = []
            for name in args.manifests:
                path = Path(name)
                path = path / "manifest.json" if path.is_dir() else path
                try:
                    with open(path, encoding="utf-8") as fh:
                        loaded.append(json.load(fh))
                except (OSError, json.JSONDecodeError) as exc:
                    raise ConfigError("manifests", f"{name}: {exc}")
            print(report(loaded))
            return EXIT_OK
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc))
        cfg = parse_config(raw, args.out, args.seed_override)
        manifest = run(cfg, args.threads)
        print(json.dumps(manifest["summary"], indent=2, sort_keys=True, default=_jsonable))
        return EXIT_OK
    except EnumerationCapExceeded as exc:
        print(f"config error: depth: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BasePointRejected as exc:
        print(f"base point rejected: {exc}\nhint: use base_point \"random\" or another seed "
              f"(--seed-override)", file=sys.stderr)
        return EXIT_BASEPOINT
    except (NumericalFailure, IncompleteLevel, ResolutionFailure, ConditionsViolated,
            ContainmentDomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
