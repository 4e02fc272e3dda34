"""``qoc`` command line: single runs, (alpha, beta) scans, gradient audits."""

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields

import numpy as np

from .closed import ClosedProblem
from .controls import is_jittery, jitter_ratio
from .gpm import GPMConfig, GPMError, VARIANTS, gpm_run
from .gradcheck import gradcheck
from .integrate import CauchyCounter, IntegrationError, IntegratorConfig
from .linalg import dagger, hs_dist2, linear_entropy, von_neumann_entropy
from .problems import REGISTRY, TABLE1_ALPHAS, TABLE1_BETAS, get_problem, list_problems

logger = logging.getLogger("qocgpm")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
SHORTHANDS = {"gpm1": "gpm1_fixed", "gpm2": "gpm2_fixed", "gpm3": "gpm3_fixed"}
NUMERIC_ERRORS = (GPMError, IntegrationError, FloatingPointError, np.linalg.LinAlgError)

# flag name -> GPMConfig field
_FLAG_FIELDS = {"variant": "variant", "alpha": "alpha", "beta": "beta", "xi": "xi",
                "max_iter": "max_iterations", "seed": "seed"}
_GPM_FIELDS = {f.name for f in fields(GPMConfig)}
SCAN_COLUMNS = ["alpha", "beta", "variant", "seed", "converged", "iterations", "cauchy_count",
                "stop_reason", "jitter_ratio", "jittery"]
SENTINEL = "-"


class UsageError(ValueError):
    pass


# -- configuration -----------------------------------------------------------------

def variant_name(v):
    name = SHORTHANDS.get(v, v)
    if name not in VARIANTS:
        raise UsageError(f"unknown variant {v!r}; use one of "
                         f"{', '.join(list(SHORTHANDS) + list(VARIANTS))}")
    return name


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def merged_settings(args):
    """File values overridden by any flag that was given on the command line."""
    settings = load_config_file(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if k not in ("command", "config", "func") and v is not None:
            settings[k] = v
    if "problem" not in settings:
        raise UsageError("--problem is required (see `qoc list-problems`)")
    return settings


def build_problem(settings):
    name = settings["problem"]
    if name not in REGISTRY:
        raise UsageError(f"unknown problem {name!r}; known: {', '.join(REGISTRY)}")
    integ = IntegratorConfig(rtol=float(settings.get("rtol", 1e-8)),
                             atol=float(settings.get("atol", 1e-10)))
    kw = {"n_intervals": int(settings["grid"])} if "grid" in settings else {}
    try:
        return get_problem(name, settings.get("case"), settings.get("task"),
                           integrator=integ, **kw)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def build_config(spec, settings):
    """Problem defaults, then config-file / flag overrides."""
    changes = {}
    for key, value in settings.items():
        field_name = _FLAG_FIELDS.get(key, key)
        if field_name in _GPM_FIELDS:
            changes[field_name] = value
    if "variant" in changes:
        changes["variant"] = variant_name(changes["variant"])
    for k in ("alpha_box", "beta_box"):
        if k in changes:
            changes[k] = tuple(changes[k])
    try:
        return spec.defaults.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _jsonable(d):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _atomic_write(path, write):
    """Write through a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


# -- trajectory export ---------------------------------------------------------------

def _f(x):
    return format(float(x), ".17g")


def write_open_trajectory(problem, evaluation, path):
    """Populations, distance to target and entropies of the first propagated state."""
    traj = evaluation.cache[0]
    cost = problem.cost
    if cost.kind == "grk":
        target = cost.final_targets[0]
    else:
        target = cost.rho_target
    n = problem.system.dim
    names = ["t"] + [f"p_{i}" for i in range(n)] + ["distance", "entropy", "linear_entropy"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for t, rho in zip(traj.times, traj.states):
            rho = 0.5 * (rho + dagger(rho))
            row = [t, *np.real(np.diag(rho)), hs_dist2(rho, target),
                   von_neumann_entropy(rho), linear_entropy(rho)]
            w.writerow([_f(x) for x in row])


def write_trajectory(problem, evaluation, path):
    if isinstance(problem, ClosedProblem):
        evaluation.cache.to_csv(path)
    else:
        write_open_trajectory(problem, evaluation, path)


# -- commands ------------------------------------------------------------------------

def cmd_run(args):
    settings = merged_settings(args)
    spec = build_problem(settings)
    cfg = build_config(spec, settings)
    out = settings.get("out", ".")
    os.makedirs(out, exist_ok=True)
    counter = CauchyCounter()
    try:
        control, trace = gpm_run(spec.problem, None, cfg, counter=counter)
    except NUMERIC_ERRORS as exc:
        print(f"qoc run: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    trace.problem = spec.id
    extra = {
        "config": _jsonable(asdict(cfg)),
        "grid": spec.problem.n_intervals,
        "rtol": spec.problem.integrator.rtol,
        "atol": spec.problem.integrator.atol,
        "jittery": is_jittery(control),
        "horizon": spec.horizon,
    }
    trace.to_csv(os.path.join(out, "trace.csv"))
    control.to_csv(os.path.join(out, "controls.csv"))
    write_trajectory(spec.problem, trace.final, os.path.join(out, "trajectory.csv"))
    trace.write_summary(os.path.join(out, "summary.json"), extra=extra)
    s = trace.summary(include_time=False)
    print(f"{spec.id}: {cfg.variant} stop={s['stop_reason']} iterations={s['iterations']} "
          f"cauchy={s['cauchy_count']} objective={s['objective']:.6g} "
          f"terminal={s['terminal']:.6g}")
    return EXIT_OK


def cell_seed(seed, i, j):
    """Deterministic per-cell seed from the scan seed and the grid indices."""
    return int(np.random.SeedSequence([int(seed), i, j]).generate_state(1)[0])


def run_cell(task):
    """One scan cell; never raises, failures become the sentinel row."""
    settings, alpha, beta, seed = task
    spec = build_problem(settings)
    variant = "gpm1_fixed" if beta == 0 else "gpm2_fixed"
    row = {"alpha": alpha, "beta": beta, "variant": variant, "seed": seed}
    try:
        cfg = build_config(spec, {**settings, "variant": variant, "alpha": alpha, "beta": beta,
                                  "seed": seed})
        control, trace = gpm_run(spec.problem, None, cfg, counter=CauchyCounter())
    except (UsageError, *NUMERIC_ERRORS) as exc:
        row.update(converged=False, iterations=SENTINEL, cauchy_count=SENTINEL,
                   stop_reason=f"error: {exc}", jitter_ratio=SENTINEL, jittery=SENTINEL)
        return row
    ok = trace.stop_reason == "terminal"
    ratio = jitter_ratio(control)
    row.update(converged=ok,
               iterations=trace.iterations if ok else SENTINEL,
               cauchy_count=trace.cauchy_count if ok else SENTINEL,
               stop_reason=trace.stop_reason, jitter_ratio=ratio, jittery=ratio > 0.25)
    return row


def scan(settings, alphas, betas, workers=None, seed=0):
    """All (alpha, beta) cells; ``beta = 0`` runs GPM-1, otherwise GPM-2."""
    tasks = [(settings, float(a), float(b), cell_seed(seed, i, j))
             for i, a in enumerate(alphas) for j, b in enumerate(betas)]
    if workers == 1:
        return [run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, tasks))


def write_scan_csv(rows, path):
    def write(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SCAN_COLUMNS)
            for r in rows:
                w.writerow([_f(r[c]) if isinstance(r[c], float) else r[c] for c in SCAN_COLUMNS])
    _atomic_write(path, write)


def read_scan_csv(path):
    """Rows as dicts; the failure sentinel comes back as ``None``."""
    def val(c, s):
        if s == SENTINEL:
            return None
        if c in ("alpha", "beta", "jitter_ratio"):
            return float(s)
        if c in ("iterations", "cauchy_count", "seed"):
            return int(s)
        if c in ("converged", "jittery"):
            return s == "True"
        return s
    with open(path, newline="", encoding="utf-8") as fh:
        return [{c: val(c, r[c]) for c in SCAN_COLUMNS} for r in csv.DictReader(fh)]


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def cmd_scan(args):
    settings = merged_settings(args)
    build_problem(settings)
    alphas = _floats(settings["alphas"]) if "alphas" in settings else list(TABLE1_ALPHAS)
    betas = _floats(settings["betas"]) if "betas" in settings else list(TABLE1_BETAS)
    if not alphas or not betas:
        raise UsageError("alpha and beta grids must be non-empty")
    for k in ("alphas", "betas", "workers"):
        settings.pop(k, None)
    out = settings.pop("out", ".")
    os.makedirs(out, exist_ok=True)
    rows = scan(settings, alphas, betas, getattr(args, "workers", None),
                int(settings.get("seed", 0)))
    path = os.path.join(out, "scan.csv")
    write_scan_csv(rows, path)
    width = max(len(f"{b:g}") for b in betas) + 4
    print("alpha\\beta" + "".join(f"{b:>{width}g}" for b in betas))
    for a in alphas:
        cells = []
        for r in rows:
            if r["alpha"] == a:
                c = SENTINEL if r["cauchy_count"] == SENTINEL else str(r["cauchy_count"])
                cells.append(f"{c + ('!' if r['jittery'] is True else ''):>{width}}")
        print(f"{a:<10g}" + "".join(cells))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_gradcheck(args):
    settings = merged_settings(args)
    spec = build_problem(settings)
    hs = args.h or [1e-5]
    if any(h <= 0 for h in hs):
        raise UsageError("h must be positive")
    worst = 0.0
    results = {}
    for h in hs:
        try:
            rep = gradcheck(spec.problem, trials=args.trials, h=h, seed=int(settings.get("seed", 0)),
                            substeps=args.substeps or None)
        except NUMERIC_ERRORS as exc:
            print(f"qoc gradcheck: numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"{spec.id} " + "\n".join(rep.lines()))
        results[format(h, "g")] = {b: max(e) for b, e in rep.rel_errors.items()}
        worst = max(worst, rep.max_rel_error)
    if "out" in settings:
        os.makedirs(settings["out"], exist_ok=True)
        with open(os.path.join(settings["out"], "gradcheck.json"), "w", encoding="utf-8") as fh:
            json.dump({"problem": spec.id, "trials": args.trials, "max_rel_error": results},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_list(args):
    for line in list_problems():
        print(line)
    return EXIT_OK


# -- parser --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p, gpm=True):
    p.add_argument("--problem", help="problem id (see list-problems)")
    p.add_argument("--case", type=int)
    p.add_argument("--task")
    p.add_argument("--grid", type=int, metavar="M", help="number of control intervals")
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--config", metavar="FILE", help="JSON settings; flags take precedence")
    if gpm:
        p.add_argument("--variant", help="gpm1, gpm2, gpm3 or a full variant name")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--xi", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)


def build_parser():
    parser = _Parser(prog="qoc", description="Gradient projection optimal control runs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="optimise one problem and write trace/controls/trajectory")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scan", help="fixed-step (alpha, beta) grid, one run per cell")
    _common(p)
    p.add_argument("--alphas", help="comma-separated alpha values")
    p.add_argument("--betas", help="comma-separated beta values (0 runs GPM-1)")
    p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("gradcheck", help="adjoint gradient vs central differences")
    _common(p, gpm=False)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--h", type=float, nargs="+", help="difference step(s), default 1e-5")
    p.add_argument("--substeps", type=int, default=4,
                   help="fixed integrator steps per interval; 0 keeps the adaptive solver")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("list-problems", help="print the registered problems")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qoc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
