"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 problem too large for the requested exact computation.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
import typing
import warnings
from pathlib import Path

import numpy as np

from . import approx
from .config import CONFIG_TYPES, ConfigError, RunConfig, load_run_config, write_resolved
from .harness import deep_vs_shallow, get_target, make_dataset, oracle_check, rate_study
from .inference import (
    CacheIncoherenceError,
    DivergenceError,
    RegressionDataset,
    SamplerConfig,
    run_chain,
)
from .network import Architecture, to_text
from .oracle import InfeasibleSizeError
from .plots import histogram_plot, loglog_plot
from .prior import PriorHyperParams, sample_prior
from .seeding import child_seed
from .theory import ProblemSpec, depth_L_star, theory_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4

HELP = {
    "theory": "evaluate sizing rules, rates and bounds for one problem",
    "fit": "run one posterior chain on a CSV dataset or a synthetic target",
    "rate-study": "posterior contraction study over sample sizes and replicates",
    "approx-demo": "approximation gadgets, depth law and identity audit",
    "deep-vs-shallow": "SGD comparison of the deep and wide polynomial networks",
    "oracle-check": "MCMC against exhaustive quadrature on the six-slot instance",
    "sample-prior": "exact draws from the prior hierarchy",
}


# ------------------------------------------------------------ flag plumbing


def _flag_type(cls, f: dataclasses.Field):
    hints = typing.get_type_hints(cls)
    t = hints[f.name]
    args = [a for a in typing.get_args(t) if a is not type(None)]
    if typing.get_origin(t) is typing.Union and len(args) == 1:
        t = args[0]
    if t is tuple or typing.get_origin(t) is tuple:
        elem = type(f.default[0]) if f.default is not dataclasses.MISSING and f.default else int
        return "tuple", elem
    return "scalar", t


def _add_dataclass_flags(parser: argparse.ArgumentParser, cls):
    for f in dataclasses.fields(cls):
        kind, t = _flag_type(cls, f)
        flag = "--" + f.name.replace("_", "-")
        shown = "required unless --config" if f.default is dataclasses.MISSING else f"default: {f.default}"
        kw = dict(dest=f.name, default=argparse.SUPPRESS, help=shown)
        if kind == "tuple":
            parser.add_argument(flag, type=t, nargs="+", **kw)
        elif t is bool:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, **kw)
        else:
            parser.add_argument(flag, type=t, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdl", description="Sparse Bayesian deep ReLU regression toolkit")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, cls in CONFIG_TYPES.items():
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        sp.add_argument("--config", help="replay a resolved_config.json; explicit flags override it")
        sp.add_argument("--out", default=f"ssdl_{name.replace('-', '_')}", help="output directory (default: %(default)s)")
        if name == "theory":
            sp.add_argument("--json", action="store_true", help="print JSON instead of text")
        _add_dataclass_flags(sp, cls)
        sp.set_defaults(_subparser=sp)
    return parser


def _resolve(args) -> RunConfig:
    cls = CONFIG_TYPES[args.subcommand]
    flags = {f.name: getattr(args, f.name) for f in dataclasses.fields(cls) if hasattr(args, f.name)}
    params = {}
    if args.config:
        base = load_run_config(args.config, expect=args.subcommand)
        params = dataclasses.asdict(base.params)
    params.update(flags)
    missing = [f.name for f in dataclasses.fields(cls) if f.default is dataclasses.MISSING and f.name not in params]
    if missing:
        args._subparser.error("missing required flags: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return RunConfig.build(args.subcommand, params, args.out)


# ------------------------------------------------------------- subcommands


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def cmd_theory(cfg, out: Path, args) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        problem = ProblemSpec(**dataclasses.asdict(cfg))
    report = theory_report(problem)
    text = report.to_text()
    doc = _clean(report.as_dict())
    (out / "theory.txt").write_text(text)
    _write_json(out / "theory.json", doc)
    print(json.dumps(doc, indent=1, sort_keys=True) if args.json else text, end="" if not args.json else "\n")
    return EXIT_OK


def _load_csv_dataset(path) -> RegressionDataset:
    try:
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    if arr.shape[1] < 2:
        raise ConfigError("data file needs at least one input column and a response column")
    try:
        return RegressionDataset(arr[:, :-1], arr[:, -1])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_fit(cfg, out: Path, args) -> int:
    if cfg.data:
        data = _load_csv_dataset(cfg.data)
    else:
        data = make_dataset(get_target(cfg.target), cfg.n, cfg.design, child_seed(cfg.seed, "data"), cfg.noise)
    depth = cfg.depth if cfg.depth is not None else depth_L_star(max(data.n, 2), data.p)
    arch = Architecture.template(data.p, cfg.N_init, depth)
    if not cfg.adaptive:
        arch = Architecture(arch.widths)
    hyper = PriorHyperParams(cfg.lambda_N, cfg.lambda_s, cfg.clip_bound)
    scfg = SamplerConfig(
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        thinning=cfg.thinning,
        beta_std=cfg.beta_std,
        N_max=cfg.N_max,
        seed=child_seed(cfg.seed, "chain"),
    )
    summary = run_chain(data, arch, hyper, scfg, record_path=out / "draws.tsv")
    mean = summary.mean_prediction()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k + 1}" for k in range(data.p)] + ["y", "posterior_mean"])
    for x, y, m in zip(data.xs, data.ys, mean):
        w.writerow([repr(float(v)) for v in x] + [repr(float(y)), repr(float(m))])
    (out / "predictions.csv").write_text(buf.getvalue())
    doc = {
        "n": data.n,
        "depth": depth,
        "draws": summary.n_draws,
        "N_quantiles": summary.quantiles("N"),
        "s_quantiles": summary.quantiles("s"),
        "acceptance": summary.acceptance,
        "sup_exceed_fraction": summary.sup_exceed_fraction(),
    }
    _write_json(out / "summary.json", _clean(doc))
    samples = {"s": summary.ss}
    if summary.adaptive:
        samples = {"N": summary.Ns, "s": summary.ss}
    histogram_plot(out / "posterior_N_s.svg", samples, title="posterior draws")
    print(json.dumps(_clean(doc), sort_keys=True))
    return EXIT_OK


def cmd_rate_study(cfg, out: Path, args) -> int:
    result = rate_study(cfg, out)
    summary = _clean(result.summary())
    print(json.dumps(summary, indent=1, sort_keys=True))
    if summary["failed_cells"] == len(result.rows):
        print("every cell failed; see cells/*.json for tracebacks", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _write_table(path: Path, rows: list):
    buf = io.StringIO()
    w = csv.DictWriter(buf, list(rows[0]) if rows else [], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    path.write_text(buf.getvalue())


def cmd_approx_demo(cfg, out: Path, args) -> int:
    x = np.linspace(0.0, 1.0, 4097)
    doc = {"sawtooth": [], "product": [], "interpolant": []}
    for m in range(1, cfg.sawtooth_levels + 1):
        net = approx.sawtooth_net(m)
        doc["sawtooth"].append(
            {"m": m, "slope_changes": approx.slope_changes(net(x[:, None])), "depth": net.depth, "raw_depth": net.raw_depth}
        )
    law = approx.square_depth_law(range(1, cfg.square_levels + 1))
    doc["square"] = law
    g = np.linspace(0.0, 1.0, 129)
    G = np.column_stack([np.repeat(g, g.size), np.tile(g, g.size)])
    for m in cfg.product_levels:
        net = approx.product_net(m)
        doc["product"].append({"m": m, "sup_error": float(np.max(np.abs(net(G) - G[:, 0] * G[:, 1]))), "bound": net.bound})
    target = get_target(cfg.interpolant_target)
    pts = x[:, None] if target.p == 1 else G
    for K in cfg.interpolant_knots:
        net = approx.pl_interpolant_net(target, K, p=target.p)
        err = float(np.max(np.abs(net(pts) - target(pts))))
        doc["interpolant"].append({"K": K, "sup_error": err, "width": max(net.net.arch.widths[1:-1])})
    audit = approx.kolmogorov_identity_audit(cfg.audit_grid)
    doc["identity_audit"] = {}
    for name, entry in audit.items():
        if name == "grid":
            continue
        doc["identity_audit"][name] = {k: entry[k] for k in ("max_abs_residual", "argmax", "structure")}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x1", "x2", "residual"])
        for i, a in enumerate(audit["grid"]):
            for j, b in enumerate(audit["grid"]):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(entry["residual"][i, j]))])
        (out / f"identity_residual_{name}.csv").write_text(buf.getvalue())
    _write_json(out / "approx_demo.json", doc)
    _write_table(out / "sawtooth.csv", doc["sawtooth"])
    _write_table(out / "square_net.csv", law["rows"])
    _write_table(out / "product_net.csv", doc["product"])
    _write_table(out / "interpolant.csv", doc["interpolant"])
    rows = law["rows"]
    loglog_plot(
        out / "square_error_vs_depth.svg",
        [r["depth"] for r in rows],
        [r["sup_error"] for r in rows],
        xlabel="depth",
        ylabel="sup error",
        title="square network",
    )
    print(json.dumps({k: v for k, v in law.items() if k != "rows"}, sort_keys=True))
    return EXIT_OK


def cmd_deep_vs_shallow(cfg, out: Path, args) -> int:
    report = deep_vs_shallow(cfg, out)
    print(json.dumps(_clean({k: report[k] for k in ("deep", "shallow", "deep_beats_shallow", "reference")}), indent=1))
    if report["deep"]["status"] != "ok" or report["shallow"]["status"] != "ok":
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_oracle_check(cfg, out: Path, args) -> int:
    report = oracle_check(cfg, out)
    print(f"TV = {report['tv']:.4f} (ok: {report['tv_ok']}); probe mean gap = {report['probe_mean_gap']:.4f}")
    return EXIT_OK


def cmd_sample_prior(cfg, out: Path, args) -> int:
    if cfg.draws < 0:
        raise ConfigError("draws must be >= 0")
    arch = Architecture.template(cfg.p, cfg.N, cfg.depth)
    hyper = PriorHyperParams(cfg.lambda_N, cfg.lambda_s, s_max=cfg.s_max)
    rng = np.random.default_rng(child_seed(cfg.seed, "prior"))
    lines = []
    for i in range(cfg.draws):
        d = sample_prior(arch, hyper, rng, adaptive=cfg.adaptive, N_max=cfg.N_max)
        body = to_text(d.net)
        lines.append(f"# draw {i} N={d.N} s={d.s}\n" + body + ("" if body.endswith("\n") else "\n"))
    (out / "prior_draws.txt").write_text("".join(lines))
    print(f"{cfg.draws} draws written")
    return EXIT_OK


COMMANDS = {
    "theory": cmd_theory,
    "fit": cmd_fit,
    "rate-study": cmd_rate_study,
    "approx-demo": cmd_approx_demo,
    "deep-vs-shallow": cmd_deep_vs_shallow,
    "oracle-check": cmd_oracle_check,
    "sample-prior": cmd_sample_prior,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = _resolve(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[run.subcommand](run.params, out, args)
        write_resolved(run, out)
        return code
    except InfeasibleSizeError as exc:
        print(f"error: infeasible size: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except MemoryError as exc:
        print(f"error: out of memory: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DivergenceError, CacheIncoherenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
