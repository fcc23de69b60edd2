"""Command-line interface.

Subcommands: ``simulate`` (run a scenario file and write FDP/power tables),
``fit`` (individual-level selection from a design TSV), ``fit-ss``
(summary-statistics selection from z-scores + LD), ``knockoff-gen`` (emit a
knockoff copy of a design, or knockoff z-scores), and ``report`` (merge
selection TSVs). Flags override config-file keys, which override defaults.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .annogk_pipeline import annogk_fit, ghostknockoff_fit
from .annokn_pipeline import PipelineConfig, annokn_fit, annokn_lite_fit, plain_knockoff_fit
from .data_model import (
    ld_from_array,
    load_annotations,
    load_design,
    load_ld,
    load_summary_stats,
    write_design,
)
from .errors import (
    AnnoknockError,
    ConfigError,
    DimensionMismatch,
    DuplicateSnpId,
    InvalidQ,
    ParseError,
    ZeroVarianceColumn,
)
from .knockoff_filter import write_selection
from .knockoff_gen import build_knockoff_model, sample_knockoff_zscores, sample_knockoffs
from .simulation import METHODS, SimScenario, run_comparison

USAGE_ERRORS = (
    ConfigError,
    ParseError,
    DimensionMismatch,
    DuplicateSnpId,
    InvalidQ,
    ZeroVarianceColumn,
    FileNotFoundError,
)


def _read_config_file(path) -> dict:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(line, f"line {i} is not 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _parse_grid_spec(spec):
    """Either explicit values '0.2,0.1,...' or 'COUNTx MINFRAC' like '20x0.01'."""
    if "x" in spec:
        count, frac = spec.split("x", 1)
        return None, int(count), float(frac)
    values = tuple(sorted((float(v) for v in spec.split(",")), reverse=True))
    return values, None, None


_CONFIG_KEYS = {
    "lambda0_grid": str,
    "grid_size": int,
    "grid_min_frac": float,
    "cv_folds": int,
    "d": float,
    "tau2": float,
    "max_outer_iter": int,
    "outer_tol": float,
    "seed": int,
    "q": float,
    "frac_train": float,
    "shrinkage": float,
    "threads": int,
    "lite": lambda v: v.lower() in ("1", "true", "yes"),
}


def _build_config(args, file_keys) -> tuple[PipelineConfig, dict]:
    """Merge defaults < config file < flags into a PipelineConfig.

    Returns the config plus the extra non-pipeline settings (shrinkage,
    threads, lite, seed provenance).
    """
    merged = {}
    for key, raw in file_keys.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(key, "unknown key")
        try:
            merged[key] = _CONFIG_KEYS[key](raw)
        except ValueError:
            raise ConfigError(key, f"cannot parse value '{raw}'") from None
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag

    extras = {
        "shrinkage": merged.pop("shrinkage", None),
        "threads": merged.pop("threads", None),
        "lite": merged.pop("lite", False),
        "seed_given": "seed" in merged,
    }
    grid_spec = merged.pop("lambda0_grid", None)
    kwargs = dict(merged)
    if grid_spec is not None:
        values, count, frac = _parse_grid_spec(grid_spec)
        if values is not None:
            kwargs["lambda0_grid"] = values
        else:
            kwargs["grid_size"] = count
            kwargs["grid_min_frac"] = frac
    if not extras["seed_given"]:
        kwargs["seed"] = int.from_bytes(os.urandom(4), "little")
    try:
        config = PipelineConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError("pipeline", str(exc)) from None
    return config, extras


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _write_manifest(out_dir, command, config_items, seeds, inputs, wall_time):
    lines = [f"command: {command}", f"version: {__version__}"]
    for key, value in config_items:
        lines.append(f"config.{key}: {value}")
    for name, seed in seeds:
        lines.append(f"seed.{name}: {seed}")
    for path in inputs:
        lines.append(f"input.{os.path.basename(path)}: sha256:{_digest(path)}")
    lines.append(f"wall_time_s: {wall_time:.3f}")
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- simulate

_SCENARIO_KEYS = {
    "n": int,
    "p": int,
    "rho": float,
    "n_causal": int,
    "causal_pool": int,
    "causal_prob_exponent": float,
    "h2": float,
    "amplitude": float,
    "annotation": str,
    "replicates": int,
    "seed": int,
    "methods": str,
    "qs": str,
}
_SCENARIO_REQUIRED = ("n", "p", "rho", "n_causal", "causal_pool", "replicates")


def _parse_scenario(path, pipeline_keys):
    raw = _read_config_file(path)
    scen_raw = {k: v for k, v in raw.items() if k in _SCENARIO_KEYS}
    rest = {k: v for k, v in raw.items() if k not in _SCENARIO_KEYS}
    unknown = set(rest) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    pipeline_keys.update(rest)

    for key in _SCENARIO_REQUIRED:
        if key not in scen_raw:
            raise ConfigError(key, "required scenario key is missing")
    parsed = {}
    for key, value in scen_raw.items():
        try:
            parsed[key] = _SCENARIO_KEYS[key](value)
        except ValueError:
            raise ConfigError(key, f"cannot parse value '{value}'") from None

    methods = tuple(m.strip() for m in parsed.pop("methods", "knockoffs,annokn").split(","))
    for m in methods:
        if m not in METHODS:
            raise ConfigError("methods", f"unknown method '{m}'")
    qs = tuple(float(v) for v in parsed.pop("qs", "0.1,0.2,0.3").split(","))
    seed_given = "seed" in parsed
    parsed.setdefault("seed", 0)
    annotation = parsed.pop("annotation", "index")
    try:
        scenario = SimScenario(annotation_kind=annotation, **parsed)
    except (ValueError, TypeError) as exc:
        raise ConfigError("scenario", str(exc)) from None
    return scenario, methods, qs, seed_given


def cmd_simulate(args) -> int:
    start = time.time()
    pipeline_keys = {}
    scenario, methods, qs, seed_given = _parse_scenario(args.scenario, pipeline_keys)
    config, extras = _build_config(args, pipeline_keys)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    elif not seed_given:
        scenario = replace(scenario, seed=int.from_bytes(os.urandom(4), "little"))
        print(f"generated seed: {scenario.seed}")
    threads = extras["threads"] or args.threads or os.cpu_count() or 1
    os.makedirs(args.out, exist_ok=True)

    metrics = run_comparison(scenario, methods, qs, config=config, n_jobs=threads)

    with open(os.path.join(args.out, "replicates.csv"), "w", encoding="utf-8") as fh:
        fh.write("method,q,replicate,fdp,power\n")
        for method in methods:
            sm = metrics[method]
            for qi, q in enumerate(sm.q_grid):
                for rep in range(scenario.replicates):
                    fh.write(
                        f"{method},{_fmt(q)},{rep},{_fmt(sm.fdp[qi, rep])},{_fmt(sm.power[qi, rep])}\n"
                    )
    with open(os.path.join(args.out, "aggregate.csv"), "w", encoding="utf-8") as fh:
        fh.write("method,q,mean_power,se_power,mean_fdp,se_fdp\n")
        for method in methods:
            sm = metrics[method]
            for q in sm.q_grid:
                fh.write(
                    f"{method},{_fmt(q)},{_fmt(sm.mean_power(q))},{_fmt(sm.se_power(q))},"
                    f"{_fmt(sm.mean_fdp(q))},{_fmt(sm.se_fdp(q))}\n"
                )
    with open(os.path.join(args.out, "plotdata.csv"), "w", encoding="utf-8") as fh:
        fh.write("method,q,power,fdp\n")
        for method in methods:
            sm = metrics[method]
            for q in sm.q_grid:
                fh.write(f"{method},{_fmt(q)},{_fmt(sm.mean_power(q))},{_fmt(sm.mean_fdp(q))}\n")

    _write_manifest(
        args.out,
        "simulate",
        sorted(vars(scenario).items()) + [("methods", ",".join(methods)), ("qs", qs)],
        [("scenario", scenario.seed), ("pipeline", config.seed)],
        [args.scenario],
        time.time() - start,
    )
    return 0


# ---------------------------------------------------------------- fit

def _load_aligned_annotations(path, expected_ids, no_annotations):
    if no_annotations or path is None:
        return None
    anno = load_annotations(path)
    if anno.p != len(expected_ids):
        raise DimensionMismatch("annotation rows vs covariates", len(expected_ids), anno.p)
    if anno.snp_ids is not None and tuple(anno.snp_ids) != tuple(expected_ids):
        raise ParseError("annotation snp ids do not match covariate names/order")
    return anno


def _report_lines(result):
    lam = result.penalty.lambda_anno
    lines = [
        f"chosen_lambda0: {result.penalty.lambda0!r}",
        "lambda_anno: " + (",".join(repr(float(v)) for v in lam) if lam.size else "none"),
        f"iterations: {result.fit.iterations}",
        f"converged: {result.fit.converged}",
        f"threshold: {result.selection.threshold!r}",
        f"fdp_estimate: {result.selection.fdp_estimate!r}",
        f"n_selected: {len(result.selection.selected)}",
        "cv_errors: " + ",".join(repr(v) for v in result.cv_errors),
        "trace: " + ",".join(repr(v) for v in result.trace),
    ]
    return lines


def cmd_fit(args) -> int:
    start = time.time()
    file_keys = _read_config_file(args.config) if args.config else {}
    config, extras = _build_config(args, file_keys)
    design, response = load_design(args.design)
    names = design.col_names
    anno = _load_aligned_annotations(args.annotations, names, args.no_annotations)

    n = design.n
    shrink = extras["shrinkage"] if extras["shrinkage"] is not None else 0.0
    ld = ld_from_array(design.values.T @ design.values / (n - 1), shrinkage=shrink)
    seeds = np.random.SeedSequence(config.seed).generate_state(2)
    model = build_knockoff_model(ld, m=1, d_method=config.d_method)
    x_knock = sample_knockoffs(design, model, int(seeds[0]))

    fit_config = replace(config, seed=int(seeds[1]))
    if anno is None:
        result = plain_knockoff_fit(response, design, x_knock, fit_config)
    elif extras["lite"]:
        result = annokn_lite_fit(response, design, x_knock, anno, fit_config)
    else:
        result = annokn_fit(response, design, x_knock, anno, fit_config)

    os.makedirs(args.out, exist_ok=True)
    write_selection(os.path.join(args.out, "selection.tsv"), names, result.stats, result.selection)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(_report_lines(result)) + "\n")
    inputs = [args.design] + ([args.annotations] if anno is not None else [])
    if not extras["seed_given"]:
        print(f"generated seed: {config.seed}")
    _write_manifest(
        args.out,
        "fit",
        [("q", config.q), ("lite", extras["lite"]), ("shrinkage", shrink)],
        [("root", config.seed)],
        inputs,
        time.time() - start,
    )
    return 0


def cmd_fit_ss(args) -> int:
    start = time.time()
    file_keys = _read_config_file(args.config) if args.config else {}
    config, extras = _build_config(args, file_keys)
    stats = load_summary_stats(args.sumstats, n=args.n)
    shrink = extras["shrinkage"] if extras["shrinkage"] is not None else 0.1
    ld = load_ld(args.ld, shrinkage=shrink)
    if ld.p != stats.p:
        raise DimensionMismatch("LD size vs sumstats rows", stats.p, ld.p)
    anno = _load_aligned_annotations(args.annotations, stats.snp_ids, args.no_annotations)

    if anno is None:
        result = ghostknockoff_fit(stats, ld, config)
    else:
        result = annogk_fit(stats, ld, anno, config)

    os.makedirs(args.out, exist_ok=True)
    write_selection(
        os.path.join(args.out, "selection.tsv"), stats.snp_ids, result.stats, result.selection
    )
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(_report_lines(result)) + "\n")
    inputs = [args.sumstats, args.ld] + ([args.annotations] if anno is not None else [])
    if not extras["seed_given"]:
        print(f"generated seed: {config.seed}")
    _write_manifest(
        args.out,
        "fit-ss",
        [("q", config.q), ("n", args.n), ("shrinkage", shrink)],
        [("root", config.seed)],
        inputs,
        time.time() - start,
    )
    return 0


# ---------------------------------------------------------------- knockoff-gen

def cmd_knockoff_gen(args) -> int:
    start = time.time()
    if (args.design is None) == (args.ld is None):
        raise ConfigError("design/ld", "give exactly one of --design or --ld")
    seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(4), "little")
    if args.seed is None:
        print(f"generated seed: {seed}")
    os.makedirs(args.out, exist_ok=True)
    shrink = args.shrinkage if args.shrinkage is not None else 0.0

    if args.design is not None:
        design, response = load_design(args.design)
        ld = ld_from_array(
            design.values.T @ design.values / (design.n - 1), shrinkage=shrink
        )
        model = build_knockoff_model(ld, m=1)
        x_knock = sample_knockoffs(design, model, seed)
        write_design(os.path.join(args.out, "knockoffs.tsv"), x_knock, response)
        inputs = [args.design]
    else:
        if args.sumstats is None or args.n is None:
            raise ConfigError("sumstats/n", "--ld mode needs --sumstats and --n")
        stats = load_summary_stats(args.sumstats, n=args.n)
        ld = load_ld(args.ld, shrinkage=shrink)
        if ld.p != stats.p:
            raise DimensionMismatch("LD size vs sumstats rows", stats.p, ld.p)
        model = build_knockoff_model(ld, m=1)
        zm = sample_knockoff_zscores(stats, model, seed)
        with open(os.path.join(args.out, "knockoff_zscores.tsv"), "w", encoding="utf-8") as fh:
            fh.write("snp\tz\tz_knock\n")
            for j, s in enumerate(stats.snp_ids):
                fh.write(f"{s}\t{float(stats.z[j])!r}\t{float(zm[stats.p + j])!r}\n")
        inputs = [args.sumstats, args.ld]

    _write_manifest(
        args.out, "knockoff-gen", [("shrinkage", shrink)], [("sampling", seed)], inputs,
        time.time() - start,
    )
    return 0


# ---------------------------------------------------------------- report

def _read_selection_tsv(path):
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["snp", "w", "q_value", "selected"]:
            raise ParseError(f"{path}: not a selection TSV", line=1)
        for line in fh:
            cells = line.rstrip("\n").split("\t")
            if len(cells) != 4:
                raise ParseError(f"{path}: malformed row")
            rows[cells[0]] = int(cells[3])
    return rows


def cmd_report(args) -> int:
    start = time.time()
    files = [_read_selection_tsv(p) for p in args.selections]
    all_ids = sorted({s for f in files for s in f})
    os.makedirs(args.out, exist_ok=True)
    union, inter = [], []
    with open(os.path.join(args.out, "summary.tsv"), "w", encoding="utf-8") as fh:
        fh.write("snp\tn_files\tn_selected\tin_union\tin_intersection\n")
        for s in all_ids:
            present = [f for f in files if s in f]
            hits = sum(f[s] for f in present)
            in_union = int(hits > 0)
            in_inter = int(len(present) == len(files) and hits == len(files))
            union.append(in_union)
            inter.append(in_inter)
            fh.write(f"{s}\t{len(present)}\t{hits}\t{in_union}\t{in_inter}\n")

    lines = [
        f"files: {len(files)}",
        f"snps: {len(all_ids)}",
        f"union_selected: {sum(union)}",
        f"intersection_selected: {sum(inter)}",
    ]
    if args.regions:
        region_of = {}
        with open(args.regions, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if header != ["snp", "region"]:
                raise ParseError("region map must have header 'snp\\tregion'", line=1)
            for line in fh:
                snp, region = line.rstrip("\n").split("\t")
                region_of[snp] = region
        counts = {}
        for s, u in zip(all_ids, union):
            region = region_of.get(s, "unassigned")
            counts.setdefault(region, [0, 0])
            counts[region][0] += 1
            counts[region][1] += u
        with open(os.path.join(args.out, "regions.tsv"), "w", encoding="utf-8") as fh:
            fh.write("region\tn_snps\tn_selected_union\tsignificant\n")
            for region in sorted(counts):
                n_snps, n_sel = counts[region]
                fh.write(f"{region}\t{n_snps}\t{n_sel}\t{int(n_sel > 0)}\n")
        lines.append(f"significant_regions: {sum(1 for v in counts.values() if v[1] > 0)}")

    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_manifest(args.out, "report", [], [], list(args.selections), time.time() - start)
    return 0


# ---------------------------------------------------------------- entry point

def _add_common_fit_flags(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--q", type=float, default=None, help="target FDR level (default 0.2)")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=None)
    sub.add_argument("--d", type=float, default=None, help="annotation exponent scale (default sqrt(L))")
    sub.add_argument("--tau2", type=float, default=None, help="annotation weight prior variance")
    sub.add_argument("--lambda0-grid", dest="lambda0_grid", default=None,
                     help="'v1,v2,...' explicit or 'COUNTxMINFRAC' like '20x0.01'")
    sub.add_argument("--cv-folds", dest="cv_folds", type=int, default=None)
    sub.add_argument("--shrinkage", type=float, default=None,
                     help="LD shrinkage epsilon (default 0 in-sample, 0.1 for fit-ss)")
    sub.add_argument("--no-annotations", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="annoknock",
        description="Annotation-informed knockoff variable selection. "
        "Precedence: flags > config file keys > defaults.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run a simulation scenario file")
    sim.add_argument("scenario", help="key=value scenario file")
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--threads", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    fit = subs.add_parser("fit", help="individual-level selection from a design TSV")
    fit.add_argument("--design", required=True)
    fit.add_argument("--annotations", default=None)
    fit.add_argument("--lite", action="store_true", default=None,
                     help="use the simplified single-loop pipeline")
    _add_common_fit_flags(fit)
    fit.set_defaults(func=cmd_fit)

    fss = subs.add_parser("fit-ss", help="summary-statistics selection from z-scores + LD")
    fss.add_argument("--sumstats", required=True)
    fss.add_argument("--ld", required=True)
    fss.add_argument("--n", type=int, required=True, help="study sample size")
    fss.add_argument("--annotations", default=None)
    _add_common_fit_flags(fss)
    fss.set_defaults(func=cmd_fit_ss)

    kg = subs.add_parser("knockoff-gen", help="emit a knockoff design copy or knockoff z-scores")
    kg.add_argument("--design", default=None)
    kg.add_argument("--ld", default=None)
    kg.add_argument("--sumstats", default=None)
    kg.add_argument("--n", type=int, default=None)
    kg.add_argument("--out", required=True)
    kg.add_argument("--seed", type=int, default=None)
    kg.add_argument("--shrinkage", type=float, default=None)
    kg.set_defaults(func=cmd_knockoff_gen)

    rep = subs.add_parser("report", help="merge selection TSVs into a union/intersection summary")
    rep.add_argument("selections", nargs="+")
    rep.add_argument("--out", required=True)
    rep.add_argument("--regions", default=None, help="TSV 'snp region' map")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AnnoknockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
