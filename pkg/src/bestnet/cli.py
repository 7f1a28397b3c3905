"""Command-line front end: ``bestnet <command> ...``.

Every command writes its outputs plus a ``manifest.json`` into ``--out-dir``;
``bestnet replay <manifest>`` re-runs the recorded command.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence,
4 invariant violation (e.g. coupled run with dominance violations).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import heavy_traffic as ht
from . import meanfield as mf
from . import network as nw
from . import simulator as sim
from .allocation import allocate, verify_feasibility, verify_maxmin_conditions

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4

log = logging.getLogger("bestnet")


@dataclass
class RunManifest:
    command: str
    parameters: dict
    input_hash: str | None = None
    output_paths: list[str] = field(default_factory=list)
    seed: int | None = None
    timestamp: str = ""

    def write(self, out_dir: Path) -> Path:
        self.timestamp = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=1))
        return path


def spec_hash(spec: nw.NetworkSpec) -> str:
    canonical = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(out: Path, name: str, text: str, manifest: RunManifest) -> Path:
    path = out / name
    path.write_text(text)
    manifest.output_paths.append(str(path))
    return path


def _manifest(args, argv: list[str]) -> RunManifest:
    params = {k: v for k, v in vars(args).items() if k != "func"}
    params["argv"] = argv
    return RunManifest(command=args.command, parameters=params, seed=getattr(args, "seed", None))


# --- commands --------------------------------------------------------------


def cmd_gen(args, argv) -> int:
    if args.kind == "linear":
        spec = nw.gen_linear(args.n, args.capacity, args.lambda_long, args.lambda_short, args.sigma)
        report = nw.compute_link_loads(spec)
    elif args.kind == "star":
        spec = nw.gen_star(args.n, args.rho, args.sigma, exact_load=args.exact_load)
        report = nw.compute_link_loads(spec)
    elif args.kind == "asym-star":
        spec = nw.gen_asym_star(args.n_in, args.n_out, args.c_in, args.c_out, args.lam, args.sigma)
        base = nw.compute_link_loads(spec)
        report = nw.LoadReport(base.per_link_load, base.max_load, base.classification, nw.asym_star_loads(spec, args.n_in))
    else:
        spec = nw.gen_hypercube(args.d, args.route_len, args.rho, args.sigma)
        report = nw.compute_link_loads(spec)
    out = _out_dir(args)
    manifest = _manifest(args, argv)
    manifest.input_hash = spec_hash(spec)
    _write(out, "spec.json", spec.to_json(), manifest)
    _write(out, "loads.json", report.to_json(), manifest)
    manifest.write(out)
    summary = {
        "label": spec.label,
        "links": spec.n_links,
        "routes": spec.n_routes,
        "max_load": report.max_load,
        "classification": report.classification.value,
        **report.extra,
    }
    print(json.dumps(summary))
    return EXIT_OK


def _sim_config(args) -> sim.SimConfig:
    return sim.SimConfig(
        seed=args.seed,
        warmup_time=args.warmup,
        measure_time=args.measure,
        policy=args.policy,
        max_events=args.max_events,
    )


def cmd_simulate(args, argv) -> int:
    spec = nw.NetworkSpec.load(args.spec)
    config = _sim_config(args)
    out = _out_dir(args)
    manifest = _manifest(args, argv)
    manifest.input_hash = spec_hash(spec)
    if args.coupled:
        mm, mn, violations = sim.run_coupled(spec, config)
        for tag, stats in (("maxmin", mm), ("min", mn)):
            _write(out, f"stats_{tag}.json", stats.to_json(), manifest)
            _write(out, f"occupancy_{tag}.csv", stats.to_csv(), manifest)
        result = {
            "dominance_violations": violations,
            "mean_occupancy_maxmin": mm.mean_link_occupancy,
            "mean_occupancy_min": mn.mean_link_occupancy,
            "events": mm.events_processed,
        }
        _write(out, "coupled.json", json.dumps(result), manifest)
        manifest.write(out)
        print(json.dumps(result))
        return EXIT_INVARIANT if violations else EXIT_OK
    stats = sim.run(spec, config)
    _write(out, "stats.json", stats.to_json(), manifest)
    _write(out, "occupancy.csv", stats.to_csv(), manifest)
    manifest.write(out)
    print(json.dumps({
        "policy": stats.policy,
        "mean_occupancy": stats.mean_link_occupancy,
        "events": stats.events_processed,
        "truncated": stats.truncated,
    }))
    return EXIT_OK


def _solve_one(rho: float, route_len: int, k_max, damping: float, tol: float) -> mf.MeanFieldSolution:
    return mf.fixed_point_solve(mf.MeanFieldProblem(rho, route_len, k_max, damping, tol))


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("BESTNET_THREADS", "1")))
    except ValueError:
        return 1


def cmd_meanfield(args, argv) -> int:
    out = _out_dir(args)
    manifest = _manifest(args, argv)
    if args.asym:
        problem = mf.AsymStarProblem(args.rho_in, args.rho_out, args.c_ratio, tol=args.tol, damping=args.damping)
        sol = mf.solve_asym_star(problem)
        rows = ["k,alpha_in,alpha_out,u_in,u_out"]
        for k in range(sol.alpha_in.size):
            rows.append(",".join([str(k)] + [repr(float(a[k])) for a in (sol.alpha_in, sol.alpha_out, sol.u_in, sol.u_out)]))
        _write(out, "asym.csv", "\n".join(rows) + "\n", manifest)
        _write(out, "asym.json", json.dumps(sol.metadata()), manifest)
        manifest.write(out)
        print(json.dumps(sol.metadata()))
        return EXIT_OK
    tasks = [(rho, L) for L in args.L for rho in args.rho]
    for rho, _ in tasks:
        if not 0 < rho < 1:
            raise nw.ValidationError(f"rho={rho}: load must be < 1 for a stationary regime (unstable network)")
    workers = min(_threads(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_solve_one, rho, L, args.k_max, args.damping, args.tol) for rho, L in tasks]
            solutions = [f.result() for f in futures]
    else:
        solutions = [_solve_one(rho, L, args.k_max, args.damping, args.tol) for rho, L in tasks]
    summaries = []
    for (rho, L), sol in zip(tasks, solutions):
        stem = "meanfield" if len(tasks) == 1 else f"meanfield_rho{rho:g}_L{L}"
        _write(out, f"{stem}.csv", sol.to_csv(), manifest)
        _write(out, f"{stem}.json", sol.to_json(), manifest)
        summaries.append(sol.metadata())
    manifest.write(out)
    for s in summaries:
        print(json.dumps(s))
    return EXIT_OK


def read_distribution(path: str | Path) -> np.ndarray:
    """Probability column of a ``k,prob,...`` or ``k,alpha,...`` CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        col = next((c for c in ("prob", "alpha") if c in (reader.fieldnames or [])), None)
        if col is None:
            raise nw.ValidationError(f"{path}: no 'prob' or 'alpha' column")
        rows = [(int(r["k"]), float(r[col])) for r in reader]
    if not rows:
        raise nw.ValidationError(f"{path}: empty distribution")
    dist = np.zeros(max(k for k, _ in rows) + 1)
    for k, p in rows:
        dist[k] = p
    return dist


def compare(p: np.ndarray, q: np.ndarray) -> dict:
    k_p = np.arange(p.size)
    k_q = np.arange(q.size)
    return {
        "sup_cdf_distance": sim.sup_cdf_distance(p, q),
        "mean_diff": float(k_p @ p - k_q @ q),
    }


def cmd_compare(args, argv) -> int:
    report = compare(read_distribution(args.sim_csv), read_distribution(args.mf_csv))
    if args.out_dir:
        out = _out_dir(args)
        manifest = _manifest(args, argv)
        _write(out, "compare.json", json.dumps(report), manifest)
        manifest.write(out)
    print(json.dumps(report))
    return EXIT_OK


def cmd_const_a(args, argv) -> int:
    solution = ht.solve_cv_system(z_end=args.z_end, tol=args.tol)
    A = ht.estimate_A(solution)
    out = _out_dir(args)
    manifest = _manifest(args, argv)
    result = {**solution.summary(), "A": A, "blasius_residual": ht.blasius_residual(solution)}
    _write(out, "trajectory.csv", solution.to_csv(), manifest)
    _write(out, "const_a.json", json.dumps(result), manifest)
    manifest.write(out)
    print(f"A = {A:.10f}")
    return EXIT_OK


def cmd_alloc(args, argv) -> int:
    spec = nw.NetworkSpec.load(args.spec)
    counts = np.array([int(c) for c in args.counts.split(",")])
    alloc = allocate(spec, counts, args.policy)
    d = alloc.to_dict()
    d["feasible"] = verify_feasibility(spec, counts, alloc)
    d["maxmin_conditions"] = verify_maxmin_conditions(spec, counts, alloc)
    print(json.dumps(d))
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    return main(manifest["parameters"]["argv"])


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bestnet", description="Best-effort network simulator and mean-field solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a topology and print its load report")
    g.add_argument("kind", choices=["linear", "star", "asym-star", "hypercube"])
    g.add_argument("--n", type=int, default=100, help="links (star) or link count (linear)")
    g.add_argument("--rho", type=float, default=0.9)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--capacity", type=float, default=1.0)
    g.add_argument("--exact-load", action="store_true", help="star: rescale route rates so every link load is exactly rho")
    g.add_argument("--lambda-long", type=float, default=0.3)
    g.add_argument("--lambda-short", type=float, default=0.4)
    g.add_argument("--n-in", type=int, default=2)
    g.add_argument("--n-out", type=int, default=20)
    g.add_argument("--c-in", type=float, default=10.0)
    g.add_argument("--c-out", type=float, default=1.0)
    g.add_argument("--lam", type=float, default=0.5)
    g.add_argument("--d", type=int, default=5)
    g.add_argument("--route-len", type=int, default=2)
    g.add_argument("--out-dir", default="out/gen")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("simulate", help="run the fluid simulator on a spec file")
    s.add_argument("spec")
    s.add_argument("--policy", default="min", choices=["min", "maxmin"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--warmup", type=float, default=None)
    s.add_argument("--measure", type=float, default=1000.0)
    s.add_argument("--max-events", type=int, default=10_000_000)
    s.add_argument("--coupled", action="store_true", help="run max-min and min on shared arrivals")
    s.add_argument("--out-dir", default="out/sim")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("meanfield", help="solve the mean-field fixed point")
    m.add_argument("--rho", type=float, nargs="+", default=[0.9])
    m.add_argument("--L", type=int, nargs="+", default=[2])
    m.add_argument("--k-max", type=int, default=None)
    m.add_argument("--damping", type=float, default=0.5)
    m.add_argument("--tol", type=float, default=1e-10)
    m.add_argument("--asym", action="store_true", help="asymmetric star instead of the symmetric network")
    m.add_argument("--rho-in", type=float, default=0.5)
    m.add_argument("--rho-out", type=float, default=0.5)
    m.add_argument("--c-ratio", type=float, default=1.0, help="C_out / C_in")
    m.add_argument("--out-dir", default="out/meanfield")
    m.set_defaults(func=cmd_meanfield)

    c = sub.add_parser("compare", help="compare a simulated and a mean-field distribution")
    c.add_argument("sim_csv")
    c.add_argument("mf_csv")
    c.add_argument("--out-dir", default=None)
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("const-a", help="integrate the heavy-traffic ODE and estimate A")
    a.add_argument("--tol", type=float, default=1e-10)
    a.add_argument("--z-end", type=float, default=50.0)
    a.add_argument("--out-dir", default="out/const_a")
    a.set_defaults(func=cmd_const_a)

    al = sub.add_parser("alloc", help="bandwidth shares for given route counts")
    al.add_argument("spec")
    al.add_argument("--counts", required=True, help="comma-separated x_r")
    al.add_argument("--policy", default="min", choices=["min", "maxmin"])
    al.set_defaults(func=cmd_alloc)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except nw.ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (mf.ConvergenceError, ht.IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
