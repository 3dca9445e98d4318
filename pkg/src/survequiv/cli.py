"""Command-line interface.

Exit codes: ``test`` returns 0 when the null is rejected and 1 when it is not;
every command returns 2 on invalid input and 3 on a numerical failure.

JSON outputs embed a run manifest. CSV outputs stay plain tables; when written
with ``--output`` their manifest goes to ``<output>.manifest.json``.
"""

import argparse
import csv
import datetime
import hashlib
import io
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bands import pointwise_band
from .distributions import FAMILIES
from .equivtest import Margin, TimeSpec, noninferiority_onset, parse_kind, run_test
from .exceptions import DomainError, InputError, NumericalError
from .inference import SurvivalSample, fit_mle, select_model
from .nonparametric import kaplan_meier, km_difference_band, logrank_test
from .simulation import SCENARIOS, parse_study_config, parse_test_spec, run_study

EXIT_REJECT, EXIT_NO_REJECT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
BUILTIN_DATASETS = {"veteran": "data/veteran.csv"}


class DatasetError(InputError):
    pass


def _read_bytes(path):
    if str(path) in BUILTIN_DATASETS:
        return resources.files("survequiv").joinpath(BUILTIN_DATASETS[str(path)]).read_bytes()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc.strerror}") from None


def parse_dataset(path, reference=None, *, warn=None):
    """Read a delimited file with columns ``time``, ``status``, ``group`` (``id`` optional).

    Returns ``(reference_sample, test_sample)``. Without ``reference`` the
    lexicographically first group is the reference and ``warn`` (if given)
    is called with a notice. ``path`` may also name a bundled dataset
    (``veteran``).
    """
    text = _read_bytes(path).decode("utf-8-sig")
    try:
        dialect = csv.Sniffer().sniff(text.splitlines()[0] if text else "", delimiters=",;\t ")
    except csv.Error:
        dialect = csv.excel
    reader = csv.DictReader(io.StringIO(text), dialect=dialect)
    header = [h.strip() for h in (reader.fieldnames or [])]
    missing = {"time", "status", "group"} - set(header)
    if missing:
        raise DatasetError(f"{path}: missing required column(s) {sorted(missing)}")
    reader.fieldnames = header
    rows, problems = [], []
    for lineno, row in enumerate(reader, start=2):
        if None in row or any(v is None for v in row.values()):
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        try:
            t = float(row["time"])
        except ValueError:
            problems.append(f"line {lineno}: time {row['time']!r} is not a number")
            continue
        if not np.isfinite(t) or t <= 0:
            problems.append(f"line {lineno}: time must be positive, got {row['time']!r}")
            continue
        status = row["status"].strip()
        if status not in ("0", "1"):
            problems.append(f"line {lineno}: status must be 0 or 1, got {status!r}")
            continue
        group = row["group"].strip()
        if not group:
            problems.append(f"line {lineno}: empty group")
            continue
        rows.append((t, int(status), group))
    if problems:
        raise DatasetError(f"{path}: {len(problems)} invalid row(s)\n  " + "\n  ".join(problems[:20]))
    groups = sorted({g for _, _, g in rows})
    if len(groups) != 2:
        raise DatasetError(f"{path}: expected exactly two groups, found {len(groups)} {groups}")
    if reference is None:
        reference = groups[0]
        if warn is not None:
            warn(f"no --reference given; using {reference!r} (lexicographically first) as reference")
    elif reference not in groups:
        raise DatasetError(f"reference group {reference!r} not in {groups}")
    other = groups[1] if reference == groups[0] else groups[0]

    def sample(label):
        sel = [(t, s) for t, s, g in rows if g == label]
        return SurvivalSample(np.array([t for t, _ in sel]), np.array([s for _, s in sel]), label)

    return sample(reference), sample(other)


def load_veteran(reference="standard"):
    """The bundled veteran lung-cancer trial: ``(standard, test)`` samples."""
    return parse_dataset("veteran", reference)


def parse_grid(text):
    """``t1:t2:n`` -> ``n`` equispaced points including both ends."""
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like t1:t2:n, got {text!r}") from None
    if n < 1 or a <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}")
    return np.linspace(a, b, n) if n > 1 else np.array([a])


def parse_interval(text):
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"interval must look like t1:t2, got {text!r}") from None
    if a <= 0 or b < a:
        raise argparse.ArgumentTypeError(f"invalid interval {text!r}")
    return a, b


def _sha256(path):
    return hashlib.sha256(_read_bytes(path)).hexdigest() if path is not None else None


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def manifest(args, seed=None):
    options = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func",)}
    return {
        "command": args.command,
        "options": options,
        "seed": seed,
        "version": __version__,
        "input_sha256": _sha256(getattr(args, "data", None)),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }


def _dump_json(payload):
    return json.dumps(payload, indent=2, default=_jsonable) + "\n"


def _emit_json(args, payload, seed=None):
    payload = {"manifest": manifest(args, seed), **payload}
    _write(args.output, _dump_json(payload))


def _emit_csv(args, header, rows, seed=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    _write(args.output, buf.getvalue())
    if args.output is not None:
        _write(f"{args.output}.manifest.json", _dump_json(manifest(args, seed)))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    return v


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _samples(args):
    return parse_dataset(args.data, args.reference, warn=_warn)


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % 2**63)
    return args.seed


def _fit_pair(args):
    ref, test = _samples(args)
    cens = getattr(args, "censoring_family", None)
    fits = [fit_mle(s, args.family, censoring_family=cens) for s in (ref, test)]
    for f in fits:
        if not f.converged:
            raise NumericalError(f"{args.family} fit of group {f.label!r} did not converge")
    return (ref, test), fits


def cmd_fit(args):
    _, fits = _fit_pair(args)
    _emit_json(args, {"time_unit": args.time_unit, "reference": fits[0].label, "fits": [f.to_dict() for f in fits]})
    return 0


def cmd_select(args):
    rows = []
    for s in _samples(args):
        for rank, f in enumerate(select_model(s, args.families), start=1):
            rows.append([s.label, rank, f.family, f.aic, f.loglik, f.n_params, int(f.converged)])
    _emit_csv(args, ["group", "rank", "family", "aic", "loglik", "n_params", "converged"], rows)
    return 0


def _band(args, grid):
    samples, fits = _fit_pair(args)
    seed = _seed(args) if args.method != "asymptotic" else args.seed
    kwargs = {}
    if args.method == "nonparametric_bootstrap":
        kwargs["samples"] = samples
    if args.t_max is not None:
        kwargs["t_max"] = args.t_max
    band = pointwise_band(fits[0], fits[1], grid, args.target, args.method, args.alpha,
                          args.n_boot, seed, **kwargs)
    return band, seed


def cmd_bands(args):
    band, seed = _band(args, args.grid)
    rows = [[r["t"], r["estimate"], r["lower"], r["upper"], r["sigma"]] for r in band.rows()]
    _emit_csv(args, ["t", "estimate", "lower", "upper", "sigma"], rows, seed)
    return 0


def cmd_test(args):
    samples, fits = _fit_pair(args)
    seed = _seed(args) if args.method != "asymptotic" else args.seed
    kwargs = {"samples": samples} if args.method == "nonparametric_bootstrap" else {}
    if args.t_max is not None:
        kwargs["t_max"] = args.t_max
    if args.at is not None:
        time = TimeSpec(args.at)
    else:
        time = TimeSpec(*args.interval, grid_n=args.grid_n)
    decision = run_test(args.kind, fits[0], fits[1], time, Margin(args.margin, args.target), args.alpha,
                    args.method, args.n_boot, seed, **kwargs)
    payload = {"time_unit": args.time_unit, "decision": decision.to_dict()}
    if time.grid().size > 1:
        payload["noninferiority_onset"] = noninferiority_onset(decision.band, decision.margin)
    _emit_json(args, payload, seed)
    return EXIT_REJECT if decision.reject else EXIT_NO_REJECT


def cmd_km(args):
    ref, test = _samples(args)
    kms = [kaplan_meier(s) for s in (ref, test)]
    if args.band:
        if args.grid is None:
            raise InputError("--band needs --grid t1:t2:n")
        band = km_difference_band(kms[0], kms[1], args.grid, args.alpha)
        rows = [[r["t"], r["estimate"], r["lower"], r["upper"], r["sigma"]] for r in band.rows()]
        _emit_csv(args, ["t", "estimate", "lower", "upper", "sigma"], rows)
        return 0
    rows = []
    for s, km in zip((ref, test), kms):
        for i, t in enumerate(km.event_times):
            rows.append([s.label, float(t), float(km.survival[i]), float(km.greenwood_var[i]),
                         int(km.at_risk[i]), int(km.n_events[i])])
    _emit_csv(args, ["group", "t", "survival", "greenwood_var", "at_risk", "events"], rows)
    return 0


def cmd_logrank(args):
    ref, test = _samples(args)
    res = logrank_test(ref, test)
    _emit_json(args, {
        "groups": [ref.label, test.label],
        "statistic": res.statistic,
        "p_value": res.p_value,
        "observed_reference": res.observed,
        "expected_reference": res.expected,
        "variance": res.variance,
    })
    return 0


def cmd_simulate(args):
    conf = parse_study_config(Path(args.config).read_text()) if args.config else {"tests": []}
    cli = {
        "scenario": args.scenario, "study": args.study, "n1": args.n1, "n2": args.n2,
        "n_sim": args.n_sim, "n_boot": args.n_boot, "seed": args.seed, "alpha": args.alpha,
        "method": args.method, "methods": args.methods, "targets": args.targets, "grid": args.grid,
    }
    conf.update({k: v for k, v in cli.items() if v is not None})
    conf["tests"] = conf["tests"] + [parse_test_spec(t) for t in args.test or []]
    if "scenario" not in conf:
        raise InputError("simulate needs --scenario (or a config file with 'scenario = ...')")
    if conf.get("study", "rejection") == "rejection" and not conf["tests"]:
        raise InputError("a rejection study needs at least one --test")
    if conf.get("seed") is None:
        conf["seed"] = _seed(args)
    args.seed = conf["seed"]
    result = run_study(conf)
    payload = {"manifest": manifest(args, conf["seed"]), **result.to_dict()}
    if args.output is None:
        sys.stdout.write(result.to_csv())
    else:
        _write(f"{args.output}.csv", result.to_csv())
        _write(f"{args.output}.json", _dump_json(payload))
        if result.study == "rejection":
            _write(f"{args.output}.table.csv", result.table())
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", default="veteran",
                        help="delimited file with time,status,group columns (default: bundled veteran data)")
    common.add_argument("--reference", help="reference group label (default: lexicographically first)")
    common.add_argument("--time-unit", default=None, help="label echoed into outputs")
    common.add_argument("--output", "-o", help="output file (default: stdout)")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--family", default="weibull", choices=sorted(FAMILIES))
    fitting.add_argument("--censoring-family", default="exponential", choices=sorted(FAMILIES))

    band = argparse.ArgumentParser(add_help=False)
    band.add_argument("--target", default="diff", choices=["diff", "loghr"])
    band.add_argument("--method", default="asymptotic",
                      choices=["asymptotic", "bootstrap", "nonparametric_bootstrap"])
    band.add_argument("--alpha", type=float, default=0.05)
    band.add_argument("--n-boot", type=int, default=500)
    band.add_argument("--seed", type=int, default=None)
    band.add_argument("--t-max", type=float, default=None, help="administrative cutoff for bootstrap draws")

    parser = argparse.ArgumentParser(prog="survequiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, fitting], help="fit one family per group")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", parents=[common], help="rank families by AIC per group")
    p.add_argument("--families", nargs="+", default=None, choices=sorted(FAMILIES))
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bands", parents=[common, fitting, band], help="pointwise confidence band")
    p.add_argument("--grid", type=parse_grid, required=True, help="t1:t2:n")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("test", parents=[common, fitting, band], help="non-inferiority or equivalence test")
    p.add_argument("--kind", required=True, choices=["noninf", "equiv"])
    p.add_argument("--margin", type=float, required=True)
    when = p.add_mutually_exclusive_group(required=True)
    when.add_argument("--at", type=float, help="single time point")
    when.add_argument("--interval", type=parse_interval, help="t1:t2")
    p.add_argument("--grid-n", type=int, default=102, help="grid points over an interval")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("km", parents=[common], help="Kaplan-Meier curves or difference band")
    p.add_argument("--band", action="store_true")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--grid", type=parse_grid, default=None, help="t1:t2:n")
    p.set_defaults(func=cmd_km)

    p = sub.add_parser("logrank", parents=[common], help="two-sample log-rank test")
    p.set_defaults(func=cmd_logrank)

    p = sub.add_parser("simulate", help="Monte-Carlo coverage or rejection study")
    p.add_argument("--config", help="key = value study file")
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--study", choices=["coverage", "rejection"])
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--n-sim", type=int)
    p.add_argument("--n-boot", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=["asymptotic", "bootstrap"])
    p.add_argument("--methods", nargs="+", choices=["asymptotic", "bootstrap"])
    p.add_argument("--targets", nargs="+", choices=["diff", "loghr"])
    p.add_argument("--grid", type=parse_grid, help="t1:t2:n (coverage study)")
    p.add_argument("--test", action="append",
                   help="kind, target, t0|t1:t2, delta[, ref=1|2|auto]; repeatable")
    p.add_argument("--output", "-o", help="output prefix; writes PREFIX.csv and PREFIX.json")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kind", None):
        args.kind = parse_kind(args.kind)
    try:
        return args.func(args)
    except (InputError, DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
