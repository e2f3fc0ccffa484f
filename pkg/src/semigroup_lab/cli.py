"""Experiment runner: ``semigroup-lab run CONFIG`` and ``semigroup-lab plot REPORT``.

Exit status is 0 when every configured assertion holds, 1 when one fails
(the failures are listed in ``failures.json`` and on stdout) and 2 for a
malformed config.
"""
import argparse
import csv
import json
import logging
import math
import os
import re
import sys
import tempfile
from contextlib import contextmanager

import numpy as np

from . import numcore
from .cauchy import CauchyProblem, derivative_representation_check, solve_via_chernoff
from .chernoff import ChernoffFamily, GeneratorSpec
from .criteria import approximation_sequence_check
from .errors import ConfigError, FormatError, SemigroupLabError, ToleranceNotReached
from .evolution import convergence_study, difference_quotient_check, small_step_limit_check, write_convergence_csv
from .fixtures import FixtureDescriptor
from .stability import DEFAULT_M, DEFAULT_N, DEFAULT_S, CertGrid, GrowthBound, estimate_growth_bound, verify_growth_bound
from .trotter import SplitPair, trotter_convergence, trotter_stability_check

log = logging.getLogger("semigroup_lab")

KINDS = ("stability", "evolve", "cauchy", "trotter", "criteria", "lemmas")
SEED_ENV = "SEMIGROUP_LAB_SEED"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


# -- config parsing -------------------------------------------------------------

class _Config:
    """Thin accessor over the parsed JSON that raises ConfigError with locations."""

    def __init__(self, data, text):
        if not isinstance(data, dict):
            raise ConfigError("top level must be a JSON object", line=1)
        self.data = data
        self.text = text

    def line_of(self, key):
        m = re.search(r'"%s"\s*:' % re.escape(key), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, key, message):
        return ConfigError(message, field=key, line=self.line_of(key.split(".")[-1]))

    def get(self, key, default=None, required=False):
        if key not in self.data:
            if required:
                raise ConfigError("missing required field", field=key)
            return default
        return self.data[key]

    def number(self, key, default=None, positive=False, required=False):
        v = self.get(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.error(key, f"expected a finite number, got {v!r}")
        if positive and not v > 0:
            raise self.error(key, f"must be positive, got {v!r}")
        return v

    def int_list(self, key, default=None, required=False, increasing=True):
        v = self.get(key, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or not v or not all(isinstance(i, int) and not isinstance(i, bool) and i > 0 for i in v):
            raise self.error(key, "expected a nonempty list of positive integers")
        if increasing and any(b <= a for a, b in zip(v, v[1:])):
            raise self.error(key, "must be strictly increasing")
        return v

    def float_list(self, key, default=None, required=False):
        v = self.get(key, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or not v or not all(
            isinstance(i, (int, float)) and not isinstance(i, bool) and math.isfinite(i) and i >= 0 for i in v
        ):
            raise self.error(key, "expected a nonempty list of nonnegative numbers")
        return [float(i) for i in v]


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    cfg = _Config(data, text)
    kind = cfg.get("kind", required=True)
    if kind not in KINDS:
        raise cfg.error("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    for key in ("tol", "t", "s", "horizon"):
        if key in data:
            cfg.number(key, positive=True)
    if not isinstance(data.get("expect", {}), dict):
        raise cfg.error("expect", "expected an object of assertions")
    return cfg


def _build_fixtures(cfg, seed):
    raw = cfg.get("fixtures", {})
    if not isinstance(raw, dict):
        raise cfg.error("fixtures", "expected an object mapping names to descriptors")
    out = {}
    for name, desc in raw.items():
        if not isinstance(desc, dict) or "kind" not in desc:
            raise cfg.error(name, "fixture descriptor needs a 'kind'")
        params = {k: v for k, v in desc.items() if k not in ("kind", "size")}
        try:
            out[name] = FixtureDescriptor(desc["kind"], desc.get("size", 2), params).build(seed)
        except SemigroupLabError as exc:
            raise cfg.error(name, str(exc)) from None
    return out


def _operator(cfg, fixtures, ref, key):
    if isinstance(ref, str):
        if ref not in fixtures:
            raise cfg.error(key, f"references undefined fixture {ref!r}")
        op = fixtures[ref]
        if isinstance(op, tuple):
            raise cfg.error(key, f"fixture {ref!r} is a pair; use it through 'pair'")
        return op
    try:
        return numcore.as_operator(np.array(ref, dtype=float))
    except (SemigroupLabError, ValueError, TypeError):
        raise cfg.error(key, "expected a fixture name or a square numeric matrix") from None


def _split(cfg, fixtures, spec, key):
    if "pair" in spec:
        ref = spec["pair"]
        if ref not in fixtures or not isinstance(fixtures[ref], tuple):
            raise cfg.error(key, f"'pair' must name a pair fixture, got {ref!r}")
        return fixtures[ref]
    if "C" in spec and "D" in spec:
        return _operator(cfg, fixtures, spec["C"], "C"), _operator(cfg, fixtures, spec["D"], "D")
    raise cfg.error(key, "splitting recipes need 'pair' or both 'C' and 'D'")


def _family(cfg, fixtures):
    spec = cfg.get("family", required=True)
    if not isinstance(spec, dict) or "recipe" not in spec:
        raise cfg.error("family", "expected an object with a 'recipe'")
    recipe = spec["recipe"]
    label = spec.get("label", "")
    if recipe in ("exact", "implicit_euler"):
        A = _operator(cfg, fixtures, spec.get("operator"), "operator")
        return getattr(ChernoffFamily, recipe)(A, label=label)
    if recipe in ("lie_trotter", "strang"):
        C, D = _split(cfg, fixtures, spec, "family")
        return getattr(ChernoffFamily, recipe)(C, D, label=label)
    if recipe == "custom":
        # the only config-expressible custom form: F(t) = I + t A
        if spec.get("form") != "affine":
            raise cfg.error("form", "custom families in configs support form 'affine' only")
        A = _operator(cfg, fixtures, spec.get("operator"), "operator")
        ident = np.eye(A.shape[0])
        return ChernoffFamily.custom(lambda t: ident + t * A, GeneratorSpec(A, "A"), label=label or "affine")
    raise cfg.error("recipe", f"unknown recipe {recipe!r}")


def _vector(cfg, key, dim, seed, default="ones"):
    spec = cfg.get(key, default)
    if spec == "ones":
        return np.ones(dim)
    if spec == "random":
        return np.random.default_rng(seed).standard_normal(dim)
    if isinstance(spec, str) and spec.startswith("basis:"):
        try:
            i = int(spec.split(":", 1)[1])
            return np.eye(dim)[i]
        except (ValueError, IndexError):
            raise cfg.error(key, f"bad basis index in {spec!r}") from None
    if isinstance(spec, list) and len(spec) == dim:
        try:
            vals = [complex(*v) if isinstance(v, list) else v for v in spec]
            return numcore.as_state(np.array(vals), dim)
        except (TypeError, ValueError, SemigroupLabError):
            pass
    raise cfg.error(key, f"expected 'ones', 'random', 'basis:i' or a list of {dim} numbers")


def _grid(cfg):
    raw = cfg.get("grid")
    if raw is None:
        return CertGrid()
    if not isinstance(raw, dict):
        raise cfg.error("grid", "expected an object")
    sub = _Config(raw, cfg.text)
    try:
        return CertGrid(
            sub.int_list("n_values", list(DEFAULT_N)),
            sub.int_list("m_values", list(DEFAULT_M)),
            sub.float_list("s_values", list(DEFAULT_S)),
        )
    except SemigroupLabError as exc:
        raise cfg.error("grid", str(exc)) from None


def _bound(cfg, key="bound"):
    raw = cfg.get(key)
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise cfg.error(key, "expected an object with 'M' and 'a'")
    sub = _Config(raw, cfg.text)
    M = sub.number("M", 1.0)
    a = sub.number("a", 0.0)
    if M < 1:
        raise cfg.error("M", f"must be >= 1, got {M}")
    return GrowthBound(float(M), float(a))


def _order_range(cfg, expect, key):
    v = expect.get(key)
    if v is None or v == "exact":
        return v
    if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v) and v[0] <= v[1]):
        raise cfg.error(key, "expected [low, high] or 'exact'")
    return v


# -- output helpers -------------------------------------------------------------

@contextmanager
def atomic_path(path):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _write_json(path, obj):
    with atomic_path(path) as tmp:
        with open(tmp, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_order(report, target, failures, name):
    if target is None:
        return
    if target == "exact":
        if not report.exact:
            failures.append({"check": name, "expected": "exact", "observed": report.order_label})
        return
    lo, hi = target
    if report.exact or report.order is None or not lo <= report.order <= hi:
        failures.append({"check": name, "expected": [lo, hi], "observed": report.order_label})


# -- experiment kinds -------------------------------------------------------------

def _run_stability(cfg, fx, seed, out, jobs, failures):
    F = _family(cfg, fx)
    grid = _grid(cfg)
    tol = cfg.number("tol", 1e-10, positive=True)
    bound = _bound(cfg) or estimate_growth_bound(F, grid, jobs=jobs)
    report = verify_growth_bound(F, bound, grid, tol=tol, jobs=jobs)
    path = os.path.join(out, cfg.get("report", "stability.csv"))
    with atomic_path(path) as tmp:
        report.to_csv(tmp)
    expect = cfg.get("expect", {}).get("passed", True)
    if report.passed != expect:
        failures.append({
            "check": "growth_bound",
            "expected": expect,
            "observed": report.passed,
            "violations": [list(v) for v in report.violations],
        })
    return {"bound": {"M": bound.M, "a": bound.a}, "passed": report.passed,
            "violations": len(report.violations), "max_ratio": report.max_ratio, "files": [path]}


def _run_evolve(cfg, fx, seed, out, jobs, failures):
    F = _family(cfg, fx)
    t = cfg.number("t", 1.0, positive=True)
    n_list = cfg.int_list("n_list", [8, 16, 32, 64, 128, 256, 512, 1024])
    x0 = _vector(cfg, "x0", F.dim, seed)
    ref = numcore.matrix_exponential(t * F.generator.map) @ x0
    report = convergence_study(F, t, n_list, x0, ref)
    path = os.path.join(out, cfg.get("report", "convergence.csv"))
    with atomic_path(path) as tmp:
        write_convergence_csv(tmp, [report])
    _check_order(report, _order_range(cfg, cfg.get("expect", {}), "order"), failures, "order")
    return {"order": report.order_label, "monotone": report.monotone, "files": [path]}


def _run_cauchy(cfg, fx, seed, out, jobs, failures):
    F = _family(cfg, fx)
    horizon = cfg.number("horizon", 1.0, positive=True)
    x0 = _vector(cfg, "x0", F.dim, seed)
    s_grid = cfg.float_list("s_grid", list(np.linspace(0, horizon, 5)))
    tol = cfg.number("tol", 1e-6, positive=True)
    schedule = cfg.int_list("n_schedule", None)
    p = CauchyProblem(F.generator, x0, horizon)
    try:
        cert = solve_via_chernoff(F, p, s_grid, tol, schedule)
        converged = True
    except ToleranceNotReached as exc:
        cert, converged = exc.certificate, False
    deriv = derivative_representation_check(F, p, s_grid, cert.n_used)
    cert.residuals["derivative_representation"] = [float(r) for r in deriv.residuals]
    path = os.path.join(out, cfg.get("report", "certificate.json"))
    _write_json(path, cert.to_json())
    if cfg.get("expect", {}).get("converged", True) and not converged:
        failures.append({"check": "cauchy_gap", "expected": f"< {tol}", "observed": cert.cauchy_gap})
    return {"converged": converged, "n_used": cert.n_used, "cauchy_gap": cert.cauchy_gap, "files": [path]}


def _run_trotter(cfg, fx, seed, out, jobs, failures):
    spec = cfg.get("family") or {k: cfg.data[k] for k in ("pair", "C", "D") if k in cfg.data}
    C, D = _split(cfg, fx, spec, "pair")
    pair = SplitPair(C, D)
    s = cfg.number("s", 1.0, positive=True)
    n_list = cfg.int_list("n_list", [8, 16, 32, 64, 128, 256, 512])
    x = _vector(cfg, "x0", pair.dim, seed)
    reports = [trotter_convergence(pair, s, n_list, x)]
    if cfg.get("strang", True):
        reports.append(trotter_convergence(pair, s, n_list, x, strang=True))
    path = os.path.join(out, cfg.get("report", "trotter.csv"))
    with atomic_path(path) as tmp:
        write_convergence_csv(tmp, reports)
    files = [path]
    expect = cfg.get("expect", {})
    _check_order(reports[0], _order_range(cfg, expect, "order"), failures, "lie_trotter_order")
    if len(reports) > 1:
        _check_order(reports[1], _order_range(cfg, expect, "strang_order"), failures, "strang_order")
    summary = {"orders": {r.label: r.order_label for r in reports}}
    bound = _bound(cfg)
    if bound is not None:
        stab = trotter_stability_check(pair, bound, _grid(cfg), jobs=jobs)
        spath = os.path.join(out, cfg.get("stability_report", "trotter_stability.csv"))
        with atomic_path(spath) as tmp:
            stab.to_csv(tmp)
        files.append(spath)
        summary["stability_passed"] = stab.passed
        want = expect.get("stable", True)
        if stab.passed != want:
            failures.append({"check": "trotter_stability", "expected": want, "observed": stab.passed})
    summary["files"] = files
    return summary


def _run_criteria(cfg, fx, seed, out, jobs, failures):
    F = _family(cfg, fx)
    f = _vector(cfg, "x0", F.dim, seed)
    s_values = cfg.float_list("s_values", [0.25, 0.5, 1.0])
    n_list = cfg.int_list("n_list", [64, 128, 256, 512, 1024, 2048, 4096])
    t = cfg.number("t", 1.0, positive=True)
    tol = cfg.number("tol", 1e-3, positive=True)
    kind = cfg.get("candidate", "reference")
    Z = F.generator.map
    if kind == "reference":
        candidate = lambda s, n: numcore.matrix_exponential(s * t * Z) @ f  # noqa: E731
    elif kind == "constant":
        candidate = lambda s, n: f  # noqa: E731
    else:
        raise cfg.error("candidate", f"expected 'reference' or 'constant', got {kind!r}")
    report = approximation_sequence_check(F, f, s_values, n_list, candidate, t=t, tol=tol)
    path = os.path.join(out, cfg.get("report", "criteria.csv"))
    with atomic_path(path) as tmp:
        report.to_csv(tmp)
    want = cfg.get("expect", {}).get("passed", True)
    if report.passed != want:
        failures.append({"check": "approximation_sequence", "expected": want,
                         "observed": {repr(s): v for s, v in report.verdicts.items()}})
    return {"verdicts": {repr(s): v for s, v in report.verdicts.items()}, "files": [path]}


def _run_lemmas(cfg, fx, seed, out, jobs, failures):
    F = _family(cfg, fx)
    t = cfg.number("t", 1.0, positive=True)
    g = _vector(cfg, "x0", F.dim, seed)
    bound = _bound(cfg) or estimate_growth_bound(F, _grid(cfg), jobs=jobs)
    small = small_step_limit_check(F, t, g, bound=bound)
    quot = difference_quotient_check(F, t, g, bound=bound)
    path = os.path.join(out, cfg.get("report", "lemmas.csv"))
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "i", "l", "k", "ratio", "value"])
            for (i, k), r, v in zip(small.keys, small.ratios, small.values):
                writer.writerow(["small_step", i, "", k, repr(float(r)), repr(float(v))])
            for (i, l, k), r, v in zip(quot.keys, quot.ratios, quot.values):
                writer.writerow(["difference_quotient", i, l, k, repr(float(r)), repr(float(v))])
    for name, rep in (("small_step_limit", small), ("difference_quotient", quot)):
        if not rep.monotone:
            failures.append({"check": name, "expected": "non-increasing bucket maxima",
                             "observed": rep.bucket_maxima})
    return {"small_step_maxima": small.bucket_maxima, "difference_quotient_maxima": quot.bucket_maxima,
            "rate": small.rate, "files": [path]}


RUNNERS = {
    "stability": _run_stability,
    "evolve": _run_evolve,
    "cauchy": _run_cauchy,
    "trotter": _run_trotter,
    "criteria": _run_criteria,
    "lemmas": _run_lemmas,
}


def run_experiment(config_path, out_dir=".", jobs=1, stdout=None, stderr=None):
    """Run one config; returns the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        cfg = load_config(config_path)
        seed = cfg.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise cfg.error("seed", "expected an integer")
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is not None:
            try:
                seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
        fixtures = _build_fixtures(cfg, seed)
        os.makedirs(out_dir, exist_ok=True)
        failures = []
        summary = RUNNERS[cfg.data["kind"]](cfg, fixtures, seed, out_dir, jobs, failures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except SemigroupLabError as exc:
        # numerical preconditions that the config could not have validated
        print(f"config error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_CONFIG
    summary = {"kind": cfg.data["kind"], "seed": seed, "passed": not failures, **summary}
    summary["files"] = [os.path.basename(f) for f in summary.get("files", [])]
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    if failures:
        _write_json(os.path.join(out_dir, "failures.json"), failures)
        json.dump({"failures": failures}, stdout, sort_keys=True)
        stdout.write("\n")
        return EXIT_FAIL
    return EXIT_OK


# -- plotting ---------------------------------------------------------------------

def emit_plot_script(report_path, script_path=None):
    """Write a gnuplot script for a convergence, stability or criteria CSV."""
    script_path = script_path or os.path.splitext(report_path)[0] + ".gp"
    with open(report_path, newline="") as fh:
        rows = list(csv.reader(fh))
    name = os.path.basename(report_path)
    lines = [
        "# generated by semigroup-lab",
        'set datafile separator ","',
        "set key autotitle columnhead",
        "set grid",
    ]
    if not rows or len(rows) == 1:
        log.warning("%s has no data rows; emitting an empty plot", report_path)
        lines += [f'set title "{name} (empty)"', "unset key", "plot [1:10] 1/0 notitle"]
    else:
        header = rows[0]
        cols = set(header)
        if {"family", "n", "error"} <= cols:
            families = []
            for row in rows[1:]:
                fam = row[header.index("family")]
                if fam not in families:
                    families.append(fam)
            lines += ["set logscale xy", 'set xlabel "n"', 'set ylabel "error"', f'set title "{name}"']
            curves = [
                f"'{name}' using (strcol(\"family\") eq \"{fam}\" ? column(\"n\") : 1/0):(column(\"error\")) "
                f'with linespoints title "{fam}"'
                for fam in families
            ]
            lines.append("plot " + ", \\\n     ".join(curves))
        elif {"n", "m", "s", "ratio"} <= cols:
            lines += ['set xlabel "m*s/n"', 'set ylabel "||F(s/n)^m|| / bound"', f'set title "{name}"',
                      "plot '%s' using (column(\"m\")*column(\"s\")/column(\"n\")):(column(\"ratio\")) "
                      "with points title \"ratio\", 1 with lines title \"bound\"" % name]
        elif {"s", "n", "distance"} <= cols:
            lines += ["set logscale xy", 'set xlabel "n"', 'set ylabel "distance"', f'set title "{name}"',
                      f"plot '{name}' using (column(\"n\")):(column(\"distance\")) with points title \"distance\""]
        else:
            raise FormatError(f"{report_path}: unrecognised columns {header}")
    with atomic_path(script_path) as tmp:
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return script_path


# -- entry point --------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="semigroup-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", default=".", help="output directory (default: current)")
    run.add_argument("--jobs", type=int, default=1, help="worker threads for grid evaluation")
    plot = sub.add_parser("plot", help="emit a gnuplot script for a report CSV")
    plot.add_argument("report")
    plot.add_argument("-o", "--output", default=None)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.jobs < 1:
            print("config error: --jobs must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        return run_experiment(args.config, args.out, args.jobs)
    try:
        print(emit_plot_script(args.report, args.output))
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
