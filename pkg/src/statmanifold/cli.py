"""Command-line interface.

Three subcommands: ``distance`` (arc lengths and geodesic distances
between two distributions of a model), ``reproduce`` (regenerate the
locked reference numbers as machine-readable artifacts with pass/fail
checks), and ``simulate`` (the replicated curvature study).

Every output file embeds the run manifest (command, model spec, seed,
tolerances, output path, engine version), and contains nothing
non-deterministic, so identical invocations produce byte-identical
files.  Exit codes: 0 success, 2 bad specification or usage, 3 numeric
failure or a failed locked check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import DomainError, QuadratureError
from .curvature import (
    curvature_simulation,
    gamma2_analytic,
    gamma2_cfa_closed_form,
    gamma2_numeric,
    scalar_curvature,
)
from .families import (
    RaschTest,
    TwoPLGrouped,
    cfa3_spec,
    bernoulli_pi_family,
    family_from_spec,
    iid_replicates,
    multinomial,
    mvnormal,
    normal1d,
)
from .geometry import (
    MetricField,
    arc_length,
    geodesic_distance_normal,
    line_path,
    normal_circle_path,
    normal_geodesic_path,
)
from .inference import jeffreys_normalization, jeffreys_prior, volume_element
from .irt import ability_grid, geodesic_ability, geodesic_ability_closed_form
from .quadrature import tanh_sinh

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_NUMERIC = 3

OUTPUT_DIR_ENV = "STATMANIFOLD_OUT"


@dataclass
class RunManifest:
    """Reproducibility header recorded verbatim into every output file."""

    command: str
    model_spec: dict | str | None
    seed: int | None
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    engine_version: str = __version__

    def as_dict(self) -> dict:
        return asdict(self)


def _out_path(name: str | None, default_name: str) -> str | None:
    if name == "-":
        return None
    if name:
        return name
    base = os.environ.get(OUTPUT_DIR_ENV)
    return os.path.join(base, default_name) if base else default_name


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}")


def _json_doc(manifest: RunManifest, results) -> str:
    return json.dumps({"manifest": manifest.as_dict(), "results": results},
                      indent=2, sort_keys=True) + "\n"


def _csv_doc(manifest: RunManifest, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for key, value in sorted(manifest.as_dict().items()):
        buf.write(f"# {key} = {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_model_spec(arg: str | None) -> dict:
    if arg is None:
        return {"family": "normal1d"}
    if os.path.exists(arg):
        with open(arg, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(arg)


def _parse_point(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")], dtype=float)


# --------------------------------------------------------------------- #
# distance
# --------------------------------------------------------------------- #


def cmd_distance(args) -> int:
    try:
        spec = _load_model_spec(args.model)
        family = family_from_spec(spec)
        p0 = _parse_point(getattr(args, "from"))
        p1 = _parse_point(args.to)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"model/point specification error: {exc}", file=sys.stderr)
        return EXIT_SPEC

    is_normal = spec.get("family") == "normal1d"
    try:
        if args.path in ("circle", "ellipse") and not is_normal:
            raise ValueError(f"path {args.path!r} is defined for the normal1d family")
        if args.path == "line":
            metric = MetricField.from_family(family)
            value, err = arc_length(metric, line_path(p0, p1), tol=args.tol,
                                    full_output=True)
        elif args.path == "circle":
            metric = MetricField.from_family(family)
            value, err = arc_length(metric, normal_circle_path(p0, p1), tol=args.tol,
                                    full_output=True)
        elif args.path == "ellipse":
            metric = MetricField.from_family(family)
            value, err = arc_length(metric, normal_geodesic_path(p0, p1), tol=args.tol,
                                    full_output=True)
        elif args.path == "custom":
            if not args.via:
                raise ValueError("--via is required for a custom path")
            points = [p0] + [_parse_point(t) for t in args.via.split(";")] + [p1]
            metric = MetricField.from_family(family)
            value, err = 0.0, 0.0
            for a, b in zip(points[:-1], points[1:]):
                seg, seg_err = arc_length(metric, line_path(a, b), tol=args.tol,
                                          full_output=True)
                value += seg
                err += seg_err
        elif args.path == "geodesic":
            if is_normal:
                value, err = geodesic_distance_normal(p0, p1), 0.0
            elif family.dim_k == 1:
                metric = MetricField.from_family(family)
                value, err = arc_length(metric, line_path(p0, p1), tol=args.tol,
                                        full_output=True)
            else:
                raise ValueError(
                    "geodesic distance is available for normal1d and one-parameter models"
                )
        else:
            raise ValueError(f"unknown path {args.path!r}")
    except (ValueError, DomainError) as exc:
        print(f"specification error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (QuadratureError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = RunManifest(command="distance", model_spec=spec, seed=args.seed,
                           tolerances={"quadrature": args.tol}, output=args.out)
    record = {
        "path": args.path,
        "from": p0.tolist(),
        "to": p1.tolist(),
        "value": value,
        "quadrature_error": err,
    }
    if args.format == "csv":
        doc = _csv_doc(manifest, ["path", "from", "to", "value", "quadrature_error"],
                       [[args.path, ";".join(map(str, p0)), ";".join(map(str, p1)),
                         repr(value), repr(err)]])
    else:
        doc = _json_doc(manifest, record)
    _emit(doc, _out_path(args.out, f"distance-{args.path}.{args.format}"))
    return EXIT_OK


# --------------------------------------------------------------------- #
# reproduce
# --------------------------------------------------------------------- #


def _check_rows(rows: list[dict]) -> bool:
    return all(r["pass"] for r in rows)


def _reproduce_normal_paths(tol: float):
    p0, p1 = (0.0, 1.0), (2.0, math.sqrt(2.0))
    metric = MetricField.from_family(normal1d())
    closed = geodesic_distance_normal(p0, p1)
    exact_closed = math.sqrt(2.0) * math.log((math.sqrt(17.0) + 5.0) / (2.0 * math.sqrt(2.0)))
    rows = []
    for label, value, expected, tolerance in [
        ("line", arc_length(metric, line_path(p0, p1)), 1.744, 1e-3),
        ("circle", arc_length(metric, normal_circle_path(p0, p1)), 1.697, 1e-3),
        ("ellipse", arc_length(metric, normal_geodesic_path(p0, p1)), 1.656, 1e-3),
        ("geodesic-closed-form", closed, exact_closed, 1e-6),
    ]:
        rows.append({"case": label, "computed": value, "expected": expected,
                     "tol": tolerance, "pass": abs(value - expected) <= tolerance})
    return rows


def _iso_unit_information_metric(d: int) -> MetricField:
    """Per-coordinate Fisher metric of the isotropic d-variate normal.

    The constant-curvature values tabulated for the common-variance
    normals correspond to the unit-information (per observation
    coordinate) metric (||dmu||^2 + 2 dsigma^2)/sigma^2, i.e. the family
    Fisher information divided by d.
    """
    family = mvnormal("iso-2d") if d == 2 else mvnormal("iso-d", d=d)
    return MetricField(lambda th: family.analytic_fisher(th) / d, dim=d + 1)


TABLE1_CASES = [
    ("univariate-normal",
     lambda: MetricField.from_family(normal1d()), (0.7, 1.3), -1.0),
    ("univariate-normal-iid5",
     lambda: MetricField.from_family(iid_replicates(normal1d(), 5)), (0.7, 1.3), -0.2),
    ("bivariate-normal",
     lambda: MetricField.from_family(mvnormal("full-2d")),
     (0.3, -0.2, 1.1, 0.8, 0.25), -4.5),
    ("bivariate-normal-rho0",
     lambda: MetricField.from_family(mvnormal("uncorrelated-2d")),
     (0.3, -0.2, 1.1, 0.8), -2.0),
    ("bivariate-normal-iso",
     lambda: _iso_unit_information_metric(2), (0.3, -0.2, 1.1), -3.0),
    ("trivariate-normal-iso",
     lambda: _iso_unit_information_metric(3), (0.3, -0.2, 0.4, 1.1), -6.0),
    ("trivariate-normal-known-cov",
     lambda: MetricField.from_family(
         mvnormal("known-cov-d", d=3,
                  known_cov=[[1.0, 0.3, 0.1], [0.3, 1.5, -0.2], [0.1, -0.2, 0.8]])),
     (0.3, -0.2, 0.4), 0.0),
    ("multinomial-M3",
     lambda: MetricField.from_family(multinomial(3, 10)), (0.2, 0.3), 0.05),
    ("multinomial-M4",
     lambda: MetricField.from_family(multinomial(4, 10)), (0.2, 0.3, 0.25), 0.15),
    ("multinomial-M5",
     lambda: MetricField.from_family(multinomial(5, 10)), (0.2, 0.3, 0.25, 0.15), 0.3),
]


def _reproduce_table1(tol: float):
    rows = []
    for label, build_metric, point, expected in TABLE1_CASES:
        value = scalar_curvature(build_metric(), point)
        rows.append({"case": label, "computed": value, "expected": expected,
                     "tol": 1e-2, "pass": abs(value - expected) <= 1e-2})
    return rows


def _reproduce_ability_grid(out_name, manifest):
    thetas = np.arange(-6.0, 6.0 + 1e-9, 0.25)
    artifacts = {}
    for label, test in [("m5-equal", RaschTest(np.zeros(5))),
                        ("m3-spread", RaschTest([-1.0, 0.0, 1.0]))]:
        grid = ability_grid(test, thetas)
        artifacts[label] = _csv_doc(manifest, ["theta", "A", "A0", "ramsay_s"],
                                    [[repr(v) for v in row] for row in grid])
    t5 = RaschTest(np.zeros(5))
    gaps = [abs(geodesic_ability(t5, th) - geodesic_ability_closed_form(5, th))
            for th in thetas]
    limit = geodesic_ability(t5, 40.0)
    rows = [
        {"case": "A-vs-A0-max-gap-equal-items", "computed": float(max(gaps)),
         "expected": 0.0, "tol": 1e-8, "pass": bool(max(gaps) <= 1e-8)},
        {"case": "A-upper-limit", "computed": float(limit),
         "expected": math.pi * math.sqrt(5.0), "tol": 1e-6,
         "pass": bool(abs(limit - math.pi * math.sqrt(5.0)) <= 1e-6)},
    ]
    return rows, artifacts


_CFA_SCENARIOS = [
    ("scenario1-n30", 1.0, 1.0, 1.0, 30, 0.083),
    ("scenario2-n30", 2.0, 2.0, 1.0, 30, 0.055),
    ("scenario3-n30", 1.0, 1.0, math.sqrt(2.0), 30, 0.098),
    ("scenario1-n50", 1.0, 1.0, 1.0, 50, 0.050),
    ("scenario2-n50", 2.0, 2.0, 1.0, 50, 0.033),
    ("scenario3-n50", 1.0, 1.0, math.sqrt(2.0), 50, 0.059),
]


def _reproduce_cfa_curvature(tol: float):
    rows = []
    for label, lam, tau, sig, n, expected in _CFA_SCENARIOS:
        closed = gamma2_cfa_closed_form(lam, tau, sig, n)
        pipeline = gamma2_analytic(cfa3_spec(n), [lam, tau, sig]).gamma2
        ok = abs(closed - expected) <= 1e-3 and abs(pipeline - closed) <= 1e-6 * closed
        rows.append({"case": label, "computed": pipeline, "closed_form": closed,
                     "expected": expected, "tol": 1e-3, "pass": bool(ok)})
    return rows


_CFA_SIM_EXPECTED = {
    "scenario1-n30": (0.087, 0.316),
    "scenario2-n30": (0.058, 0.326),
    "scenario3-n30": (0.095, 0.345),
}


def _reproduce_cfa_sim(K: int, seed: int):
    rows = []
    for label, lam, tau, sig, n, _ in _CFA_SCENARIOS[:3]:
        summary = curvature_simulation(cfa3_spec(n), [lam, tau, sig], n=n, K=K,
                                       base_seed=seed)
        eg, eo = _CFA_SIM_EXPECTED[label]
        ok = (abs(summary.gamma2_harmonic - eg) <= 0.15 * eg
              and abs(summary.omega2_harmonic - eo) <= 0.15 * eo)
        rows.append({"case": label, "gamma2_harmonic": summary.gamma2_harmonic,
                     "omega2_harmonic": summary.omega2_harmonic,
                     "expected_gamma2": eg, "expected_omega2": eo,
                     "converged": summary.converged, "K": summary.K,
                     "tol": "15% relative", "pass": bool(ok)})
    return rows


TWOPL_TRUE = (1.5, 0.5, -0.1, 0.1)


def _reproduce_twopl(seed: int):
    spec = TwoPLGrouped.paper_design(500, 20).cef()
    rows = []
    for j in range(20):
        rng = np.random.default_rng(seed + j)
        y = spec.sampler(np.array(TWOPL_TRUE), rng)
        report = gamma2_numeric(spec, y)
        ok = (report.diagnostics.get("converged", False)
              and report.gamma2 < 1e-6 and report.omega2 > 10.0)
        rows.append({"case": f"seed-{seed + j}", "gamma2": report.gamma2,
                     "omega2": report.omega2,
                     "converged": report.diagnostics.get("converged", False),
                     "tol": "gamma2 < 1e-6, omega2 > 10", "pass": bool(ok)})
    return rows


def _reproduce_jeffreys():
    rows = []
    bernoulli_metric = MetricField.from_family(bernoulli_pi_family())
    report = jeffreys_normalization(bernoulli_metric, [(0.0, 1.0)])
    ok = report.proper and abs(report.constant - math.pi) <= 1e-6
    rows.append({"case": "bernoulli-normalization", "computed": report.constant,
                 "expected": math.pi, "tol": 1e-6, "pass": bool(ok)})

    normal_metric_field = MetricField.from_family(normal1d())
    report2 = jeffreys_normalization(normal_metric_field,
                                     [(-math.inf, math.inf), (0.0, math.inf)])
    rows.append({"case": "normal-improper-flag", "computed": float(not report2.proper),
                 "expected": 1.0, "tol": 0.0, "pass": bool(not report2.proper)})

    # construction-rule invariance: sqrt(det g) in the (mu, log sigma)
    # chart equals the transformed theta-chart density
    from .geometry import pullback_metric

    chart = pullback_metric(normal_metric_field,
                            lambda phi: np.array([phi[0], math.exp(phi[1])]))
    worst = 0.0
    for mu, logsig in [(0.0, 0.0), (1.0, 0.5), (-2.0, -0.3)]:
        direct = volume_element(chart, [mu, logsig])
        transformed = math.exp(logsig) * volume_element(normal_metric_field,
                                                        [mu, math.exp(logsig)])
        worst = max(worst, abs(direct - transformed))
    rows.append({"case": "invariance-mu-logsigma-chart", "computed": worst,
                 "expected": 0.0, "tol": 1e-8, "pass": worst <= 1e-8})
    return rows


def cmd_reproduce(args) -> int:
    manifest = RunManifest(command=f"reproduce:{args.target}", model_spec=None,
                           seed=args.seed, tolerances={"tol": args.tol},
                           output=args.out)
    artifacts: dict[str, str] = {}
    try:
        if args.target == "normal-paths":
            rows = _reproduce_normal_paths(args.tol)
        elif args.target == "table1":
            rows = _reproduce_table1(args.tol)
        elif args.target == "ability-grid":
            rows, artifacts = _reproduce_ability_grid(args.out, manifest)
        elif args.target == "cfa-curvature":
            rows = _reproduce_cfa_curvature(args.tol)
        elif args.target == "cfa-sim":
            rows = _reproduce_cfa_sim(args.replicates, args.seed)
        elif args.target == "twopl":
            rows = _reproduce_twopl(args.seed)
        elif args.target == "jeffreys":
            rows = _reproduce_jeffreys()
        else:
            print(f"unknown target {args.target!r}", file=sys.stderr)
            return EXIT_SPEC
    except (QuadratureError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    base = _out_path(args.out, f"reproduce-{args.target}.json")
    _emit(_json_doc(manifest, rows), base)
    if base is not None:
        stem = os.path.splitext(base)[0]
        for name, doc in artifacts.items():
            _emit(doc, f"{stem}-{name}.csv")
    for row in rows:
        status = "PASS" if row["pass"] else "FAIL"
        print(f"{status} {row['case']}")
    if not _check_rows(rows):
        print("one or more locked checks failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------- #
# simulate
# --------------------------------------------------------------------- #


def cmd_simulate(args) -> int:
    try:
        spec_dict = _load_model_spec(args.model) if args.model else {
            "family": "cfa3", "n": args.n}
        if spec_dict.get("family") == "cfa3":
            spec = cfa3_spec(int(spec_dict.get("n", args.n)))
        elif spec_dict.get("family") == "twopl-grouped":
            spec = family_from_spec(spec_dict).cef()
        else:
            print("simulate supports cfa3 and twopl-grouped specs", file=sys.stderr)
            return EXIT_SPEC
        theta = _parse_point(args.theta)
    except (ValueError, json.JSONDecodeError, KeyError) as exc:
        print(f"specification error: {exc}", file=sys.stderr)
        return EXIT_SPEC

    try:
        summary = curvature_simulation(spec, theta, K=args.replicates,
                                       base_seed=args.seed)
    except (RuntimeError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    manifest = RunManifest(command="simulate", model_spec=spec_dict, seed=args.seed,
                           tolerances={}, output=args.out)
    _emit(_json_doc(manifest, asdict(summary)),
          _out_path(args.out, "simulate.json"))
    return EXIT_OK


# --------------------------------------------------------------------- #
# entry point
# --------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statmanifold",
        description="Fisher-Rao geometry computations on statistical models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    d = sub.add_parser("distance", help="arc length / geodesic distance between two fits")
    d.add_argument("--model", help="model-spec JSON (path or inline); default normal1d")
    d.add_argument("--from", required=True, help="start parameters, comma separated")
    d.add_argument("--to", required=True, help="end parameters, comma separated")
    d.add_argument("--path", default="geodesic",
                   choices=["line", "circle", "ellipse", "custom", "geodesic"])
    d.add_argument("--via", help="semicolon-separated waypoints for a custom path")
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--format", default="json", choices=["json", "csv"])
    d.add_argument("--out", help="output file ('-' for stdout)")
    d.set_defaults(func=cmd_distance)

    r = sub.add_parser("reproduce", help="regenerate locked reference numbers")
    r.add_argument("target", choices=["table1", "normal-paths", "ability-grid",
                                      "cfa-curvature", "cfa-sim", "twopl", "jeffreys"])
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--tol", type=float, default=1e-8)
    r.add_argument("--replicates", type=int, default=1000)
    r.add_argument("--out", help="output file ('-' for stdout)")
    r.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("simulate", help="replicated curvature estimation study")
    s.add_argument("--model", help="model-spec JSON (path or inline)")
    s.add_argument("--n", type=int, default=30, help="sample size for the cfa3 default")
    s.add_argument("--theta", required=True, help="true parameters, comma separated")
    s.add_argument("--replicates", "-K", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output file ('-' for stdout)")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
