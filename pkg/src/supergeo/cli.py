"""Command line harness: check suites, reduction tables, and trajectories.

Subcommands:

    supergeo check <scenario.json> [-o report.json]
    supergeo reduce <scenario.json> -o out.json
    supergeo geodesic <scenario.json> -o traj.csv [--ic K]
    supergeo correspond <scenario.json> -o dev.csv [--ic K]
    supergeo random --n N --q Q --parity P --seed S -o scenario.json

Exit codes: 0 when everything passed, 1 when a check or the correspondence
tolerance failed, 2 on input problems (bad files, bad schema, bad flags).
The environment variable SUPERGEO_SAMPLES overrides the default number of
sample points (32).  Artifacts written with -o are byte-stable for a fixed
scenario and seed; wall-clock timings only ever go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .checks import DEFAULT_SAMPLES, TOLERANCES, run_checks
from .flow import FlowError, batch_deviation, geodesic_pair, integrate_super
from .reduction import reduce_connection, reduce_metric
from .scenario import ScenarioError, load_scenario, random_scenario

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


class InputError(Exception):
    pass


def _sample_count(args):
    if args.samples is not None:
        value = args.samples
    else:
        raw = os.environ.get("SUPERGEO_SAMPLES")
        if raw is None:
            return DEFAULT_SAMPLES
        try:
            value = int(raw)
        except ValueError:
            raise InputError(f"SUPERGEO_SAMPLES must be an integer, got {raw!r}") from None
    if value < 1:
        raise InputError("sample count must be at least 1")
    return value


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(data):
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# ---- check ---------------------------------------------------------------------


def _cmd_check(args):
    scenario = load_scenario(args.scenario)
    report = run_checks(scenario, samples=_sample_count(args), parallel=not args.serial)
    for r in report.results:
        line = f"{r.name:32s} {r.status:4s}  violation {r.violation:.3e}  tolerance {r.tolerance:.0e}"
        if r.detail:
            line += f"  ({r.detail})"
        print(line)
        print(f"{r.name}: {r.wall_time:.2f}s", file=sys.stderr)
    print(f"overall: {'pass' if report.passed else 'FAIL'}")
    if args.output:
        _write_text(args.output, _json_text(report.to_json_dict()))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---- reduce ---------------------------------------------------------------------


def _faf_payload(faf):
    return {
        "constant": faf.base.render(),
        "linear": [e.render() for e in faf.linear],
    }


def _sampled_payload(constant, linear):
    return {
        "constant": [float(v) for v in constant],
        "linear": [[float(v) for v in col] for col in linear],
    }


def _reduced_connection_payload(rconn, X):
    chart = rconn.chart
    n, q = chart.n, chart.q
    entries = {}

    def key(s, u, r):
        return f"GammaTE[{r + 1}][{s + 1}][{u + 1}]"

    if rconn.is_symbolic:
        for (s, u, r), faf in sorted(rconn.entries.items()):
            entries[key(s, u, r)] = _faf_payload(faf)
        return entries, "symbolic"

    A0, A1, M1, M2 = rconn.tables_at(X)
    zeros = [0.0] * X.shape[0]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if np.any(A0[:, i, j, k]):
                    entries[key(i, j, k)] = _sampled_payload(A0[:, i, j, k], [])
            for a in range(q):
                cols = [A1[:, i, j, a, b] for b in range(q)]
                if any(np.any(c) for c in cols):
                    entries[key(i, j, n + a)] = _sampled_payload(zeros, cols)
    for i in range(n):
        for a in range(q):
            for c in range(q):
                if np.any(M1[:, i, a, c]):
                    entries[key(i, n + a, n + c)] = _sampled_payload(M1[:, i, a, c], [])
                if np.any(M2[:, a, i, c]):
                    entries[key(n + a, i, n + c)] = _sampled_payload(M2[:, a, i, c], [])
    return entries, "sampled"


def _reduced_metric_payload(rmetric):
    entries = {}
    for (s, u), faf in sorted(rmetric.entries.items()):
        entries[f"gTE[{s + 1}][{u + 1}]"] = _faf_payload(faf)
    return entries


def _cmd_reduce(args):
    scenario = load_scenario(args.scenario)
    samples = _sample_count(args)
    rng = np.random.default_rng([scenario.seed, 9001])
    lo, hi = scenario.box
    X = lo + rng.uniform(0.0, 1.0, size=(samples, scenario.chart.n)) * (hi - lo)

    rconn = reduce_connection(scenario.working_connection())
    gamma, backing = _reduced_connection_payload(rconn, X)
    payload = {
        "chart": {"n": scenario.chart.n, "q": scenario.chart.q},
        "backing": backing,
        "GammaTE": gamma,
    }
    if backing == "sampled":
        payload["sample_points"] = [[float(v) for v in row] for row in X]
    if scenario.metric is not None:
        payload["parity"] = scenario.metric.parity
        payload["gTE"] = _reduced_metric_payload(reduce_metric(scenario.metric))
    _write_text(args.output, _json_text(payload))
    print(f"wrote {len(gamma)} reduced Christoffel entries to {args.output}")
    return EXIT_OK


# ---- trajectories ---------------------------------------------------------------


def _pick_ic(scenario, index):
    if not 0 <= index < len(scenario.initial_conditions):
        raise InputError(
            f"--ic {index} out of range; scenario has {len(scenario.initial_conditions)} initial conditions"
        )
    return scenario.initial_conditions[index]


def _csv_text(header, rows):
    from io import StringIO

    buf = StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.12g}" for v in row])
    return buf.getvalue()


def _cmd_geodesic(args):
    scenario = load_scenario(args.scenario)
    ic = _pick_ic(scenario, args.ic)
    conn = scenario.working_connection()
    traj = integrate_super(conn, [ic], dt=scenario.dt, t_end=scenario.t_end, box=scenario.box)
    n, q = scenario.chart.n, scenario.chart.q
    curve = traj.curve(0)
    header = ["t"] + [f"f_{i + 1}" for i in range(n)] + [f"h_{a + 1}" for a in range(q)]
    rows = [
        [curve.times[k], *curve.f[k], *curve.h[k]]
        for k in range(curve.times.shape[0])
    ]
    _write_text(args.output, _csv_text(header, rows))
    if curve.exited:
        print(
            f"warning: trajectory left the chart box after {curve.times.shape[0] - 1} steps",
            file=sys.stderr,
        )
    print(f"wrote {len(rows)} samples to {args.output}")
    return EXIT_OK


def _cmd_correspond(args):
    scenario = load_scenario(args.scenario)
    ic = _pick_ic(scenario, args.ic)
    conn = scenario.working_connection()
    rconn = reduce_connection(conn)
    sup, cls = geodesic_pair(
        conn, rconn, [ic], dt=scenario.dt, t_end=scenario.t_end, box=scenario.box
    )
    n, q = scenario.chart.n, scenario.chart.q
    steps = int(min(sup.valid_steps[0], cls.valid_steps[0]))
    gap_pos = np.abs(sup.positions[0, :steps] - cls.positions[0, :steps])
    gap_vel = np.abs(sup.velocities[0, :steps] - cls.velocities[0, :steps])
    per_step = np.maximum(gap_pos.max(axis=1), gap_vel.max(axis=1))
    header = (
        ["t"]
        + [f"f_{i + 1}" for i in range(n)]
        + [f"h_{a + 1}" for a in range(q)]
        + [f"y_{r + 1}" for r in range(n + q)]
        + ["deviation"]
    )
    rows = [
        [sup.times[k], *sup.positions[0, k], *cls.positions[0, k], per_step[k]]
        for k in range(steps)
    ]
    _write_text(args.output, _csv_text(header, rows))
    truncated = steps < sup.times.shape[0]
    deviation = float(per_step.max()) if steps else float("nan")
    tolerance = scenario.tolerances.get("correspondence", TOLERANCES["correspondence"])
    if truncated:
        print(
            f"error: trajectory left the chart box after {steps - 1} steps; "
            f"partial deviation {deviation:.3e} written to {args.output}",
            file=sys.stderr,
        )
        return EXIT_CHECK_FAILED
    status = "pass" if deviation <= tolerance else "FAIL"
    print(f"max deviation {deviation:.3e} (tolerance {tolerance:.0e}): {status}")
    return EXIT_OK if status == "pass" else EXIT_CHECK_FAILED


# ---- random ----------------------------------------------------------------------


def _cmd_random(args):
    scenario = random_scenario(args.n, args.q, args.parity, args.seed, scale=args.scale)
    text = _json_text(scenario.raw)
    if args.output:
        _write_text(args.output, text)
        print(f"wrote scenario (n={args.n}, q={args.q}, parity={args.parity}) to {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---- plumbing ---------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="supergeo",
        description="Geodesic reduction on split supermanifolds: checks, tables, trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_samples(p):
        p.add_argument(
            "--samples",
            type=int,
            default=None,
            help=f"sample points per suite (default {DEFAULT_SAMPLES}, or SUPERGEO_SAMPLES)",
        )

    p = sub.add_parser("check", help="run the scenario's verification suites")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", default=None, help="also write the report as JSON")
    p.add_argument("--serial", action="store_true", help="run suites one after another")
    add_samples(p)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("reduce", help="emit the reduced Christoffel and metric tables")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    add_samples(p)
    p.set_defaults(func=_cmd_reduce)

    p = sub.add_parser("geodesic", help="integrate the super geodesic system")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ic", type=int, default=0, help="index into initial_conditions")
    add_samples(p)
    p.set_defaults(func=_cmd_geodesic)

    p = sub.add_parser("correspond", help="compare super and classical geodesics")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ic", type=int, default=0, help="index into initial_conditions")
    add_samples(p)
    p.set_defaults(func=_cmd_correspond)

    p = sub.add_parser("random", help="generate a random scenario file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--parity", type=int, required=True, choices=(0, 1))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scale", type=float, default=0.1)
    p.add_argument("-o", "--output", default=None)
    add_samples(p)
    p.set_defaults(func=_cmd_random)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InputError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except FlowError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
