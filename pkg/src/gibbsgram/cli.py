"""Command-line entry point: ``gibbsgram <command> --config FILE --out DIR``.

Exit codes: 0 success, 1 usage/config/runtime error, 2 failed check.
"""
import argparse
import sys

import numpy as np

from .config import RunConfig
from .errors import ConfigurationError, GibbsGramError
from .experiments import run_fhn_reproduction, run_linear_validation
from .fokker_planck import GridSpec, crosscheck_theorem
from .gramian import (StreamingGramian, empirical_gibbs_gramian, snapshot_summed_gramian)
from .reduction import galerkin_reduce, principal_basis, projection_error
from .runs import dump_json, run_directory, write_manifest
from .sde import (EnsembleSnapshots, read_snapshots_binary, simulate_ensemble, stream_ensemble,
                  write_snapshots_binary, write_snapshots_csv)

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _manifest_config(cfg, args, extra=None):
    out = {"command": args.command, "config": cfg.resolved(), "seed_override": args.seed}
    if extra:
        out.update(extra)
    return out


def _seed(cfg, args):
    return cfg.section("noise")["seed"] if args.seed is None else args.seed


def _ensemble_from_config(cfg, args, model, noise, schedule):
    g = cfg.section("gramian") if cfg.has("gramian") else {"snapshots": None}
    if g.get("snapshots"):
        path = cfg.resolve_path(g["snapshots"])
        data = read_snapshots_binary(path)
        if data.shape[2] != model.n:
            raise ConfigurationError(
                f"dimension mismatch: snapshot file {path} has n={data.shape[2]}, "
                f"model has n={model.n}")
        if data.shape[1] != len(schedule):
            raise ConfigurationError(
                f"dimension mismatch: snapshot file {path} has {data.shape[1]} times, "
                f"schedule has {len(schedule)}")
        if data.shape[0] != noise.path_count:
            raise ConfigurationError(
                f"dimension mismatch: snapshot file {path} has {data.shape[0]} paths, "
                f"noise.paths is {noise.path_count}")
        return EnsembleSnapshots(data, schedule, noise, model.label, model.initial_state,
                                 model.kind, True)
    return simulate_ensemble(model, noise, schedule, workers=args.workers)


def _reference(value):
    return value if isinstance(value, str) else np.asarray(value, dtype=float)


def _gramian(cfg, args, model, noise, schedule):
    """Return ``(G, ensemble or None)`` as configured in ``[gramian]``."""
    g = cfg.section("gramian") if cfg.has("gramian") else {
        "time": None, "reference": "origin", "streaming": False, "snapshots": None}
    ref = _reference(g["reference"])
    if g["streaming"]:
        if g["time"] is not None or g["snapshots"]:
            raise ConfigurationError(
                f"{cfg.where('gramian', 'streaming')}: streaming mode sums over the whole "
                "schedule and cannot be combined with time or snapshots")
        if isinstance(ref, str):
            ref = None if ref == "origin" else (model.initial_state if ref == "initial" else ref)
            if isinstance(ref, str):
                raise ConfigurationError(f"{cfg.where('gramian', 'reference')}: unknown reference")
        acc = StreamingGramian(noise.path_count, model.n, noise.temperature, ref)
        stream_ensemble(model, noise, schedule, [acc], workers=args.workers)
        return acc.result(), None
    ens = _ensemble_from_config(cfg, args, model, noise, schedule)
    if g["time"] is not None:
        return empirical_gibbs_gramian(ens, g["time"], ref), ens
    return snapshot_summed_gramian(ens, reference=ref), ens


def _setup(cfg, args):
    model = cfg.model()
    noise = cfg.noise(args.seed)
    return model, noise


def cmd_simulate(cfg, args):
    model, noise = _setup(cfg, args)
    schedule = cfg.schedule()
    ens = simulate_ensemble(model, noise, schedule, workers=args.workers)
    d = run_directory(args.out, "simulate", noise.seed)
    files = []
    if args.format in ("binary", "both"):
        write_snapshots_binary(ens, d / "snapshots.gksn")
        files.append("snapshots.gksn")
    if args.format in ("csv", "both"):
        write_snapshots_csv(ens, d / "snapshots.csv")
        files.append("snapshots.csv")
    write_manifest(d, "simulate", noise.seed,
                   _manifest_config(cfg, args, {"format": args.format}), files)
    print(f"wrote {ens.path_count} paths x {len(schedule)} times to {d}")
    return EXIT_OK


def cmd_gramian(cfg, args):
    model, noise = _setup(cfg, args)
    G, _ = _gramian(cfg, args, model, noise, cfg.schedule())
    d = run_directory(args.out, "gramian", noise.seed)
    G.to_csv(d / "gramian.csv")
    G.to_json(d / "gramian.json")
    write_manifest(d, "gramian", noise.seed, _manifest_config(cfg, args),
                   ["gramian.csv", "gramian.json"])
    print(f"Gramian eigenvalues: {np.array2string(G.eigenvalues, precision=6)}")
    return EXIT_OK


def cmd_reduce(cfg, args):
    model, noise = _setup(cfg, args)
    k = cfg.section("reduce")["k"]
    G, ens = _gramian(cfg, args, model, noise, cfg.schedule())
    basis = cfg._context("reduce", "k", principal_basis, G, k)
    d = run_directory(args.out, "reduce", noise.seed)
    G.to_csv(d / "gramian.csv")
    G.to_json(d / "gramian.json")
    basis.to_csv(d / "basis.csv")
    basis.to_json(d / "basis.json")
    report = {"basis": basis.report(), "gramian": G.report()}
    g = cfg.section("gramian") if cfg.has("gramian") else {"time": None}
    if ens is not None and g["time"] is None:
        err = projection_error(ens, basis)
        captured = float(np.trace(basis.basis.T @ G.matrix @ basis.basis))
        total = float(np.trace(G.matrix))
        report["trace_identity"] = {"projection_error": err, "captured": captured,
                                    "total": total, "residual": err + captured - total}
    if model.linear is not None:
        red = galerkin_reduce(model, basis)
        report["reduced_linear"] = {"A": red.linear.A.tolist(), "B": red.linear.B.tolist(),
                                    "z0": red.initial_state.tolist()}
    dump_json(report, d / "report.json")
    write_manifest(d, "reduce", noise.seed, _manifest_config(cfg, args),
                   ["gramian.csv", "gramian.json", "basis.csv", "basis.json", "report.json"])
    print(f"explained fraction: {np.array2string(basis.explained_fraction, precision=6)}")
    return EXIT_OK


def cmd_oracle(cfg, args):
    model, noise = _setup(cfg, args)
    o = cfg.section("oracle")
    schedule = cfg.schedule(times=[o["tau"]])
    grid = cfg._context("oracle", "bounds", GridSpec, o["bounds"], o["points"])
    ens = simulate_ensemble(model, noise, schedule, workers=args.workers)
    rep = crosscheck_theorem(model, noise.temperature, o["tau"], ens, grid, bins=o["bins"])
    d = run_directory(args.out, "oracle", noise.seed)
    failures = []
    if not rep.l1_distance < o["max_l1"]:
        failures.append(("l1_distance < %g" % o["max_l1"], "l1_distance = %.6g" % rep.l1_distance))
    if not rep.gramian_rel_error < o["max_gramian_rel_error"]:
        failures.append(("gramian_rel_error < %g" % o["max_gramian_rel_error"],
                         "gramian_rel_error = %.6g" % rep.gramian_rel_error))
    report = dict(rep.report(), passed=not failures)
    dump_json(report, d / "report.json")
    rep.density.to_csv(d / "density.csv")
    write_manifest(d, "oracle", noise.seed, _manifest_config(cfg, args),
                   ["report.json", "density.csv"])
    print(f"L1 = {rep.l1_distance:.6g}, Gramian relative error = {rep.gramian_rel_error:.6g}")
    return _finish(failures)


def cmd_repro_fhn(cfg, args):
    exp = cfg.fhn_experiment(args.seed)
    result = run_fhn_reproduction(exp, workers=args.workers)
    path = result.save(args.out)
    corr = result.correlation
    print(f"wrote {path.parent}")
    for (i, j), v in sorted(corr.verdicts.items()):
        print(f"rho{i} vs rho{j}: {v} (score {corr.similarity[i - 1, j - 1]:.4f})")
    failures = []
    for (i, j), want in sorted(corr.expected.items()):
        got = corr.verdicts[(i, j)]
        if got != want:
            failures.append((f"rho{i} vs rho{j}: {want}",
                             f"rho{i} vs rho{j}: {got} (score {corr.similarity[i - 1, j - 1]:.4f})"))
    for i, r in enumerate(corr.eigenvalue_ratios[2:], start=3):
        if corr.expected and not r < corr.thresholds["eigen_ratio"]:
            failures.append((f"lambda{i}/lambda1 < {corr.thresholds['eigen_ratio']}",
                             f"lambda{i}/lambda1 = {r:.6f}"))
    return _finish(failures)


def cmd_validate_linear(cfg, args):
    model, noise = _setup(cfg, args)
    v = cfg.section("validate_linear")
    dt = cfg.section("schedule")["dt"]
    if model.linear is None:
        raise ConfigurationError(f"{cfg.where('model', 'kind')}: validate-linear needs kind = 'linear'")
    result = run_linear_validation(model, noise.temperature, v["tau"], noise.path_count, dt=dt,
                                   seed=noise.seed, replicates=v["replicates"],
                                   workers=args.workers)
    path = result.save(args.out, config=_manifest_config(cfg, args))
    print(f"relative error = {result.relative_error:.6g} (target: {result.target})")
    print(f"wrote {path.parent}")
    failures = []
    if not result.relative_error < v["tolerance"]:
        failures.append((f"relative_error < {v['tolerance']}",
                         f"relative_error = {result.relative_error:.6g}"))
    return _finish(failures)


def _finish(failures):
    if not failures:
        print("check passed")
        return EXIT_OK
    lines = ["--- expected", "+++ observed"]
    for want, got in failures:
        lines += [f"- {want}", f"+ {got}"]
    print("\n".join(lines), file=sys.stderr)
    return EXIT_CHECK


COMMANDS = {
    "simulate": (cmd_simulate, "simulate a noise-driven ensemble and dump snapshots"),
    "gramian": (cmd_gramian, "estimate the Gibbs Gramian from an ensemble"),
    "reduce": (cmd_reduce, "principal basis and Galerkin reduction"),
    "oracle": (cmd_oracle, "cross-check Monte-Carlo against the Fokker-Planck density"),
    "repro-fhn": (cmd_repro_fhn, "FitzHugh-Nagumo network correlation study"),
    "validate-linear": (cmd_validate_linear, "Monte-Carlo vs analytic linear Gramian"),
}


def build_parser():
    parser = _Parser(prog="gibbsgram", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default="runs", help="output directory (default: runs)")
        p.add_argument("--workers", type=_positive, default=1, help="worker threads")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        p.add_argument("--format", choices=("csv", "binary", "both"), default="binary",
                       help="snapshot file format for simulate (default: binary)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = RunConfig.load(args.config)
        return fn(cfg, args)
    except GibbsGramError as exc:
        kind = "configuration error" if isinstance(exc, ConfigurationError) else "error"
        print(f"gibbsgram {args.command}: {kind}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"gibbsgram {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
