"""Command-line front-end for reproducible reduction experiments.

Subcommands: gen, reduce, eval, poles, moments, mc, compare. Every
command writes its artifacts (netlists, model JSON, delimited CSV,
report JSON, figures) plus a run manifest ``<out>.manifest.json``
recording the command line, the effective configuration, SHA-256
hashes of inputs and outputs, the seed, instrumentation counters and
wall time. Timestamps appear in the manifest and nowhere else, so all
other artifacts are byte-identical across reruns with fixed inputs.

``--config file.json`` supplies defaults for any of a subcommand's
flags (keyed by flag dest, e.g. ``svd_iters``); explicit flags win.

Exit codes: 0 success, 2 input error, 3 numerical failure
(singularity), 4 invariant violation under ``--strict``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from parmor import __version__
from parmor.analysis import (
    dominant_poles,
    monte_carlo_poles,
    oracle_moments,
    passivity_check,
    sweep_compare,
)
from parmor.bench import BENCH_NAMES, gen_bench
from parmor.kernels import STATS, SingularMatrixError
from parmor.netlist import NetlistError, parse_netlist, stamp_mna
from parmor.reducers import ReductionSpec, reduce_system, verify_theorem1
from parmor.sysmodel import load_model, save_model

__all__ = ["main", "InvariantViolation"]

MANIFEST_SCHEMA_VERSION = 1
OUTPUT_SCHEMA_VERSION = 1


class InvariantViolation(RuntimeError):
    """A --strict run failed a property the artifacts were expected to hold."""


@dataclass
class _RunContext:
    argv: list
    t0: float
    stats_before: dict


# ---------------------------------------------------------------------------
# small shared helpers


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f"not JSON-serializable: {type(value).__name__}")


def _json_write(path, doc):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=1, default=_json_default)
        handle.write("\n")


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return f"{float(value):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_cell(v) for v in row) + "\n")


def _manifest_path(out_path):
    return Path(out_path).with_suffix(".manifest.json")


def _config_snapshot(args):
    doc = {}
    for key, value in vars(args).items():
        if key in ("func",):
            continue
        if isinstance(value, Path):
            value = str(value)
        doc[key] = value
    return doc


def _finish_run(ctx, args, inputs, outputs, seed=None):
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "tool": "parmor",
        "version": __version__,
        "command": ctx.argv,
        "config": _config_snapshot(args),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "seed": seed,
        "stats": STATS.delta(ctx.stats_before),
        "wall_time_s": time.perf_counter() - ctx.t0,
        "timestamp_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = _manifest_path(outputs[0])
    _json_write(path, manifest)
    return path


def _load_netlist(path):
    text = Path(path).read_text(encoding="utf-8")
    return stamp_mna(parse_netlist(text))


def _load_input(path):
    """Netlist or model file, decided by extension (.json = model)."""
    path = Path(path)
    if path.suffix == ".json":
        return load_model(path), path
    return _load_netlist(path), path


def _parse_point(spec, param_names):
    """Parameter point from 'p1=0.3,p2=-0.1', '0.3,-0.1', or a sequence."""
    n = len(param_names)
    if spec is None or spec == "":
        return np.zeros(n)
    if not isinstance(spec, str):
        values = np.asarray(spec, dtype=float)
        if values.ndim != 1 or values.size != n:
            raise ValueError(f"expected {n} parameter values, got {values.size}")
        return values
    tokens = [t.strip() for t in spec.split(",") if t.strip()]
    if any("=" in t for t in tokens):
        index = {name: i for i, name in enumerate(param_names)}
        values = np.zeros(n)
        for token in tokens:
            name, _, raw = token.partition("=")
            name = name.strip()
            if name not in index:
                known = ", ".join(param_names) or "none"
                raise ValueError(f"unknown parameter {name!r} (known: {known})")
            values[index[name]] = float(raw)
        return values
    values = np.asarray([float(t) for t in tokens])
    if values.size != n:
        raise ValueError(f"expected {n} parameter values, got {values.size}")
    return values


def _parse_flog(text):
    """'a:b:N' -> N log-spaced frequencies from 10^a to 10^b Hz."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ValueError(f"--flog expects a:b:N, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    count = int(parts[2])
    if count < 1:
        raise ValueError("--flog point count must be >= 1")
    return np.logspace(lo, hi, count)


def _check_model_matches(model, system, netlist_path):
    if model.n_full != system.n or model.n_params != system.n_params:
        built_from = model.provenance.get("input_sha256", "unknown")
        raise ValueError(
            f"model (n_full={model.n_full}, n_params={model.n_params}) does "
            f"not match netlist {netlist_path} (n={system.n}, "
            f"n_params={system.n_params}); model was built from input "
            f"sha256 {built_from}, this netlist is {_sha256(netlist_path)}")


# ---------------------------------------------------------------------------
# subcommands


_GEN_FLAGS = {
    "rc_ladder": {"n": "n", "params": "n_params", "r_ohm": "r_ohm",
                  "c_farad": "c_farad", "jitter": "jitter", "seed": "seed"},
    "rc_mesh": {"rows": "rows", "cols": "cols", "params": "n_params",
                "r_ohm": "r_ohm", "c_farad": "c_farad", "jitter": "jitter",
                "seed": "seed"},
    "rc_tree": {"depth": "depth", "fanout": "fanout", "params": "n_params",
                "r_ohm": "r_ohm", "c_farad": "c_farad", "jitter": "jitter",
                "seed": "seed"},
    "coupled_rlc_bus": {"lines": "lines", "segments": "segments",
                        "params": "n_params", "coupling": "k_c",
                        "r_ohm": "r_ohm", "l_henry": "l_henry",
                        "c_farad": "c_farad", "r_drive": "r_drive",
                        "r_load": "r_load", "jitter": "jitter",
                        "seed": "seed"},
}


def _cmd_gen(args, ctx):
    mapping = _GEN_FLAGS[args.bench]
    all_flags = set().union(*(set(m) for m in _GEN_FLAGS.values()))
    kwargs = {}
    for flag in all_flags:
        value = getattr(args, flag)
        if value is None:
            continue
        if flag not in mapping:
            raise ValueError(
                f"--{flag.replace('_', '-')} does not apply to {args.bench}")
        kwargs[mapping[flag]] = value
    text = gen_bench(args.bench, **kwargs)
    out = Path(args.out) if args.out else Path(f"{args.bench}.sp")
    out.write_text(text, encoding="utf-8")
    system = stamp_mna(parse_netlist(text))
    print(f"{args.bench}: {system.n} unknowns, {system.m} ports, "
          f"{system.n_params} parameters")
    print(f"wrote {out}")
    _finish_run(ctx, args, [], [out], seed=kwargs.get("seed", 0))
    return 0


def _cmd_reduce(args, ctx):
    netlist_path = Path(args.netlist)
    system = _load_netlist(netlist_path)
    samples = tuple(
        tuple(map(float, _parse_point(s, system.param_names)))
        for s in (args.samples or ()))
    spec = ReductionSpec(
        engine=args.engine, k=args.k, k_param=args.k_param, samples=samples,
        svd_rank=args.rank, svd_iters=args.svd_iters,
        simplified=args.simplified, defl_tol=args.defl_tol, seed=args.seed)
    model = reduce_system(system, spec)
    model.provenance["input_sha256"] = _sha256(netlist_path)
    out = Path(args.out) if args.out else netlist_path.with_suffix(".model.json")
    save_model(model, out)
    stats = model.provenance.get("stats", {})
    print(f"engine = {spec.engine}")
    print(f"q = {model.q}")
    print(f"pre-deflation columns = {model.provenance['pre_deflation_columns']}")
    print(f"factorizations = {stats.get('factorizations', 0)}")
    print(f"wrote {out}")
    _finish_run(ctx, args, [netlist_path], [out], seed=spec.seed)
    if args.strict:
        report = passivity_check(model)
        if not report.passed:
            raise InvariantViolation(
                f"reduced model fails the passivity check at nominal "
                f"(worst margin {report.worst_margin:.3e})")
    return 0


def _sweep_csv_and_plot(result, out, no_plot):
    header, rows = result.to_rows()
    _write_csv(out, header, rows)
    outputs = [out]
    if not no_plot:
        from parmor.plots import sweep_figure

        png = out.with_suffix(".png")
        sweep_figure(result, png)
        outputs.append(png)
    return outputs


def _cmd_eval(args, ctx):
    obj, path = _load_input(args.input)
    p = _parse_point(args.p, obj.param_names)
    freqs = _parse_flog(args.flog)
    result = sweep_compare(obj, [], p, freqs)
    out = Path(args.out) if args.out else path.with_suffix(".eval.csv")
    outputs = _sweep_csv_and_plot(result, out, args.no_plot)
    print(f"swept {freqs.size} points, {obj.m} ports")
    print(f"wrote {out}")
    _finish_run(ctx, args, [path], outputs)
    return 0


def _cmd_poles(args, ctx):
    obj, path = _load_input(args.input)
    p = _parse_point(args.p, obj.param_names)
    poles = dominant_poles(obj, p, args.count)
    out = Path(args.out) if args.out else path.with_suffix(".poles.csv")
    rows = [
        (i + 1, pole.real, pole.imag, abs(pole))
        for i, pole in enumerate(poles.poles)
    ]
    _write_csv(out, ["index", "re", "im", "magnitude"], rows)
    print(f"{poles.poles.size} poles (requested {poles.requested}, "
          f"complete = {poles.complete})")
    print(f"wrote {out}")
    _finish_run(ctx, args, [path], [out])
    return 0


def _cmd_moments(args, ctx):
    obj, path = _load_input(args.input)
    if args.check_model:
        model_path = Path(args.check_model)
        model = load_model(model_path)
        report = verify_theorem1(obj, model, args.order, tolerance=args.tol)
        out = (Path(args.out) if args.out
               else model_path.with_suffix(".theorem1.json"))
        _json_write(out, {
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "kind": "theorem1_report",
            "k": report.k,
            "tolerance": report.tolerance,
            "dev_nearby_vs_projected": report.dev_nearby_vs_projected,
            "dev_original_vs_projected": report.dev_original_vs_projected,
            "dev_original_vs_model": report.dev_original_vs_model,
            "passed": report.passed,
        })
        print(f"nearby vs projected deviation   = "
              f"{report.dev_nearby_vs_projected:.6e}")
        print(f"original vs projected deviation = "
              f"{report.dev_original_vs_projected:.6e}")
        print(f"original vs model deviation     = "
              f"{report.dev_original_vs_model:.6e}")
        print(f"passed = {report.passed}")
        print(f"wrote {out}")
        _finish_run(ctx, args, [path, model_path], [out])
        if args.strict and not report.passed:
            raise InvariantViolation(
                f"moment preservation check failed: deviation "
                f"{report.dev_nearby_vs_projected:.3e} > tolerance "
                f"{report.tolerance:.3e}")
        return 0
    table = oracle_moments(obj, args.order)
    transfer = table.transfer(obj.l)
    moments = {
        ",".join(map(str, idx)): block.tolist()
        for idx, block in transfer.items()
    }
    out = Path(args.out) if args.out else path.with_suffix(".moments.json")
    _json_write(out, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "kind": "moment_table",
        "order": args.order,
        "m": table.m,
        "param_names": list(obj.param_names),
        "moments": moments,
    })
    print(f"{len(moments)} transfer moment blocks up to total order "
          f"{args.order}")
    print(f"wrote {out}")
    _finish_run(ctx, args, [path], [out])
    return 0


def _cmd_mc(args, ctx):
    netlist_path = Path(args.netlist)
    system = _load_netlist(netlist_path)
    model_path = Path(args.model)
    model = load_model(model_path)
    _check_model_matches(model, system, netlist_path)
    sigma = np.full(system.n_params, args.sigma_pct / 100.0)
    result = monte_carlo_poles(system, model, sigma, args.samples, args.poles,
                               seed=args.seed, bins=args.bins)
    out = Path(args.out) if args.out else model_path.with_suffix(".mc.csv")
    rows = []
    for row, sample_idx in enumerate(result.kept_indices):
        for pole_idx in range(result.pole_count):
            rows.append((int(sample_idx), pole_idx + 1,
                         result.rel_errors[row, pole_idx]))
    _write_csv(out, ["sample", "pole", "rel_error"], rows)
    summary = out.with_suffix(".summary.json")
    _json_write(summary, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "kind": "mc_summary",
        "samples": args.samples,
        "kept": int(result.kept_indices.size),
        "skipped": result.skipped,
        "pole_count": result.pole_count,
        "seed": result.seed,
        "sigma": result.sigma,
        "max_rel_error": result.max_rel_error,
        "mean_rel_error": result.mean_rel_error,
        "histogram_counts": result.histogram_counts,
        "histogram_edges": result.histogram_edges,
    })
    outputs = [out, summary]
    if not args.no_plot:
        from parmor.plots import mc_figure

        png = out.with_suffix(".png")
        mc_figure(result, png)
        outputs.append(png)
    print(f"{result.kept_indices.size} samples kept, {result.skipped} skipped")
    print(f"max relative pole error  = {result.max_rel_error:.6e}")
    print(f"mean relative pole error = {result.mean_rel_error:.6e}")
    print(f"wrote {out}")
    _finish_run(ctx, args, [netlist_path, model_path], outputs,
                seed=args.seed)
    return 0


def _cmd_compare(args, ctx):
    netlist_path = Path(args.netlist)
    system = _load_netlist(netlist_path)
    model_paths = [Path(p) for p in args.models]
    models = []
    for model_path in model_paths:
        model = load_model(model_path)
        _check_model_matches(model, system, netlist_path)
        models.append(model)
    p = _parse_point(args.p, system.param_names)
    freqs = _parse_flog(args.flog)
    result = sweep_compare(system, models, p, freqs)
    out = (Path(args.out) if args.out
           else netlist_path.with_suffix(".compare.csv"))
    outputs = _sweep_csv_and_plot(result, out, args.no_plot)
    summary = out.with_suffix(".summary.json")
    _json_write(summary, {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "kind": "compare_summary",
        "p": result.p,
        "labels": list(result.model_labels),
        "max_rel_errors": list(result.max_rel_errors),
    })
    outputs.append(summary)
    for label, err in zip(result.model_labels, result.max_rel_errors):
        print(f"{label}: max relative error {err:.6e}")
    print(f"wrote {out}")
    _finish_run(ctx, args, [netlist_path] + model_paths, outputs)
    return 0


# ---------------------------------------------------------------------------
# parser and entry point


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="parmor",
        description="Parametric model order reduction for RC/RLC circuits.")
    parser.add_argument("--version", action="version",
                        version=f"parmor {__version__}")
    subs = parser.add_subparsers(dest="command", required=True,
                                 metavar="command")
    registry = {}

    def sub(name, func, help_text):
        p = subs.add_parser(name, help=help_text)
        p.add_argument("--config", default=None,
                       help="JSON file of flag defaults; explicit flags win")
        p.set_defaults(func=func)
        registry[name] = p
        return p

    g = sub("gen", _cmd_gen, "generate a benchmark netlist")
    g.add_argument("bench", choices=BENCH_NAMES)
    g.add_argument("--n", type=int, help="rc_ladder: node count")
    g.add_argument("--rows", type=int, help="rc_mesh: row count")
    g.add_argument("--cols", type=int, help="rc_mesh: column count")
    g.add_argument("--depth", type=int, help="rc_tree: depth")
    g.add_argument("--fanout", type=int, help="rc_tree: children per node")
    g.add_argument("--lines", type=int, help="coupled_rlc_bus: line count")
    g.add_argument("--segments", type=int,
                   help="coupled_rlc_bus: segments per line")
    g.add_argument("--params", type=int, help="parameter count")
    g.add_argument("--coupling", type=float,
                   help="coupled_rlc_bus: coupling coefficient in [0, 1)")
    g.add_argument("--r-ohm", type=float, dest="r_ohm")
    g.add_argument("--c-farad", type=float, dest="c_farad")
    g.add_argument("--l-henry", type=float, dest="l_henry")
    g.add_argument("--r-drive", type=float, dest="r_drive")
    g.add_argument("--r-load", type=float, dest="r_load")
    g.add_argument("--jitter", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--out", default=None)

    r = sub("reduce", _cmd_reduce, "reduce a netlist to a parametric model")
    r.add_argument("netlist")
    r.add_argument("--engine", default="low_rank",
                   choices=("prima", "single_point", "multi_point",
                            "low_rank"))
    r.add_argument("--k", type=int, default=3, help="moment matching order")
    r.add_argument("--k-param", type=int, default=None, dest="k_param",
                   help="parameter-direction order cap (default: k)")
    r.add_argument("--rank", type=int, default=1,
                   help="low_rank: retained rank per sensitivity")
    r.add_argument("--svd-iters", type=int, default=6, dest="svd_iters")
    r.add_argument("--simplified", action="store_true",
                   help="low_rank: drop the transpose chains")
    r.add_argument("--sample", action="append", default=None, dest="samples",
                   help="multi_point: parameter sample, repeatable")
    r.add_argument("--defl-tol", type=float, default=1e-10, dest="defl_tol")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--strict", action="store_true",
                   help="exit 4 if the model fails the passivity check")
    r.add_argument("-o", "--out", default=None)

    e = sub("eval", _cmd_eval, "sweep the transfer function over frequency")
    e.add_argument("input", help="netlist or model (.json) file")
    e.add_argument("--p", default="", help="parameter point, e.g. p1=0.3,p2=0")
    e.add_argument("--flog", required=True,
                   help="a:b:N log grid, 10^a..10^b Hz, N points")
    e.add_argument("--no-plot", action="store_true", dest="no_plot")
    e.add_argument("-o", "--out", default=None)

    o = sub("poles", _cmd_poles, "dominant poles at a parameter point")
    o.add_argument("input", help="netlist or model (.json) file")
    o.add_argument("--p", default="")
    o.add_argument("--count", type=int, default=5)
    o.add_argument("-o", "--out", default=None)

    m = sub("moments", _cmd_moments,
            "oracle transfer moments / moment-preservation check")
    m.add_argument("input", help="netlist or model (.json) file")
    m.add_argument("--order", type=int, default=3)
    m.add_argument("--check-model", default=None, dest="check_model",
                   help="verify moment preservation of this low-rank model")
    m.add_argument("--tol", type=float, default=1e-8)
    m.add_argument("--strict", action="store_true",
                   help="exit 4 if the check fails")
    m.add_argument("-o", "--out", default=None)

    c = sub("mc", _cmd_mc, "Monte Carlo dominant-pole accuracy study")
    c.add_argument("netlist")
    c.add_argument("model")
    c.add_argument("--sigma-pct", type=float, default=10.0, dest="sigma_pct",
                   help="per-parameter standard deviation, percent")
    c.add_argument("--samples", type=int, default=200)
    c.add_argument("--poles", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--bins", type=int, default=20)
    c.add_argument("--no-plot", action="store_true", dest="no_plot")
    c.add_argument("-o", "--out", default=None)

    q = sub("compare", _cmd_compare,
            "sweep models against the full netlist")
    q.add_argument("netlist")
    q.add_argument("models", nargs="+", help="model (.json) files")
    q.add_argument("--p", default="")
    q.add_argument("--flog", required=True)
    q.add_argument("--no-plot", action="store_true", dest="no_plot")
    q.add_argument("-o", "--out", default=None)

    return parser, registry


def _load_config_overrides(args, sub):
    with open(args.config, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    dests = {action.dest for action in sub._actions} - {"help", "config"}
    overrides = {}
    for key, value in doc.items():
        if key not in dests:
            raise ValueError(
                f"config key {key!r} is not a flag of {args.command!r}")
        overrides[key] = value
    # Append-type flags given explicitly would extend a config-supplied
    # default list instead of replacing it; drop the override then.
    for action in sub._actions:
        if action.dest in overrides and "append" in type(action).__name__.lower():
            if getattr(args, action.dest) is not None:
                del overrides[action.dest]
    return overrides


def main(argv=None):
    argv = list(sys.argv[1:]) if argv is None else [str(a) for a in argv]
    parser, registry = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            overrides = _load_config_overrides(args, registry[args.command])
            registry[args.command].set_defaults(**overrides)
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    ctx = _RunContext(argv=["parmor"] + argv, t0=time.perf_counter(),
                      stats_before=STATS.snapshot())
    try:
        return args.func(args, ctx) or 0
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SingularMatrixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NetlistError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
