"""Command line entry point: ``elastogauge <subcommand> --config FILE``.

Exit codes: 0 all gates pass, 1 a numerical gate failed, 2 configuration
error, 3 runtime error.
"""

import argparse
import json
import logging
import os
import platform
import sys
import tempfile
import time

import numpy as np

from . import __version__, experiments as ex
from ._backend import ENV_VAR, get_backend, set_threads
from .config import KINDS, parse_config
from .dn_map import TraceOperator, write_atomic
from .errors import ConfigError, ElastoGaugeError
from .solver.grid import Grid
from .solver.ibvp import cfl_dt, solve_ibvp
from .solver.stencil import DiscreteElasticLaplacian
from .tensor_core import probe_points

log = logging.getLogger("elastogauge")

EXIT_PASS, EXIT_GATE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, columns, rows):
    write_atomic(path, ",".join(columns) + "\n",
                 (",".join(fmt(v) for v in row) + "\n" for row in rows))


def write_json(path, payload):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    os.chmod(tmp, 0o644)
    os.replace(tmp, path)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return str(v)


def write_rows(path, rows):
    write_csv(path, ("check_name", "point_index", "residual", "scale", "pass"),
              (r.as_tuple() for r in rows))


def _setup(spec, grids=None):
    return ex.DNSetup(spec.triple, spec.source, spec.domain, list(grids or spec.grids), spec.T, spec.cfl)


def _audit_grid(spec, nx):
    grid = Grid(spec.domain, nx)
    dt, vmax = cfl_dt(spec.triple, grid, spec.cfl)
    op = DiscreteElasticLaplacian(spec.triple, grid, spec.backend)
    return {"nx": nx, "dt_cfl": dt, "v_max": vmax, "delta_min": op.delta_min}


# -- subcommands -----------------------------------------------------------------------

def cmd_check_operators(spec, out):
    pts, seed = spec.checks["points"], spec.seed
    runners = {
        "scaling": lambda: ex.run_scaling_identity(spec.n, pts, seed),
        "invariance": lambda: ex.run_invariance(pts, seed),
        "forms": lambda: ex.run_form_equivalence(pts, seed),
        "christoffel": lambda: ex.run_christoffel(),
    }
    results = [runners[name]() for name in spec.checks["include"]]
    write_rows(os.path.join(out, "residuals.csv"), [r for res in results for r in res.rows])
    return results, {}


def cmd_run_dn(spec, out):
    t0 = time.perf_counter()
    grid = Grid(spec.domain, spec.nx)
    op = DiscreteElasticLaplacian(spec.triple, grid, spec.backend)
    trace = TraceOperator(spec.triple, grid)
    frames = []
    res = solve_ibvp(spec.triple, grid, spec.source, spec.T, spec.cfl, operator=op,
                     observer=lambda k, t, u: frames.append(trace(u)))
    data = np.stack(frames)
    n = spec.n
    rows = ((t, *trace.points[k], trace.labels[k], i, data[s, k, i])
            for s, t in enumerate(res.times) for k in range(len(trace.points)) for i in range(n))
    cols = ("t",) + tuple(f"node_{'xyz'[a]}" for a in range(n)) + ("face", "i", "value")
    write_csv(os.path.join(out, "dn_record.csv"), cols, rows)
    write_csv(os.path.join(out, "energy.csv"), ("step", "t", "E"),
              ((k, (k + 0.5) * res.dt, e) for k, e in enumerate(res.energy)))
    audit = {"dt": res.dt, "dt_cfl": res.dt_cfl, "v_max": res.v_max, "delta_min": res.delta_min,
             "nsteps": res.nsteps, "post_source_drift": res.post_source_drift()}
    results = [ex.CriterionResult("run-dn", "DN record", True,
                                  f"{res.nsteps} steps, {len(trace.points)} trace nodes, "
                                  f"post-source drift {res.post_source_drift():.2e}",
                                  runtime=time.perf_counter() - t0)]
    if spec.perturbation is not None:
        p = spec.perturbation
        audit["det_dphi"] = _det_audit(spec)
        probe = ex.run_sensitivity(_setup(spec), p["nx"], p["amplitude"], center=p["center"],
                                   radius=p["radius"],
                                   cases={k: v for k, v in spec.gauge_cases.items() if k != "identity"})
        write_rows(os.path.join(out, "probe.csv"), probe.rows)
        results.append(probe)
    return results, audit


def _det_audit(spec):
    X = probe_points(spec.domain, 1024, seed=spec.seed, margin=0.0)
    out = {}
    for name, case in spec.gauge_cases.items():
        lo, hi = case.phi.det_range(X)
        out[name] = {"det_min": lo, "det_max": hi, "collar": case.phi.collar_width}
        print(f"gauge case {name}: det Dphi in [{lo:.6f}, {hi:.6f}], collar {case.phi.collar_width:g}")
    return out


def cmd_compare_gauge(spec, out):
    audit = {"det_dphi": _det_audit(spec), "grid": _audit_grid(spec, spec.grids[0])}
    res = ex.run_gauge(_setup(spec), spec.gauge_cases)
    rows, faces = [], []
    for name, rep in res.details["reports"].items():
        passed = all(r.d == 0.0 for r in rep.rows) if name == "identity" else rep.passed
        for r in rep.rows:
            rows.append((name, r.h, r.nx[0], r.d, r.order, passed, r.dt))
            faces += [(name, r.h, f, v) for f, v in r.per_face.items()]
    write_csv(os.path.join(out, "gauge_report.csv"),
              ("case", "h", "nx", "d", "observed_order", "pass", "dt"), rows)
    write_csv(os.path.join(out, "gauge_faces.csv"), ("case", "h", "face", "d"), faces)
    return [res], audit


def cmd_scaling_check(spec, out):
    audit = {"grid": _audit_grid(spec, spec.scaling["nx"])}
    res = ex.run_scaling(_setup(spec), spec.scaling["mu_constant"], spec.scaling["nx"],
                         spec.scaling["mu_varying"])
    write_rows(os.path.join(out, "scaling.csv"), res.rows)
    const = res.details["constant"]
    audit["constant"] = {"residual": const.residual, "boundary_factor_range": const.boundary_factor_range,
                         "dt": const.dt}
    return [res], audit


def cmd_qp_speed(spec, out):
    q = spec.qp
    res = ex.run_christoffel(q["lambda"], q["mu"], q["rho"], q["directions"])
    write_rows(os.path.join(out, "christoffel.csv"), res.rows)
    # qP co-norm and norm of the configured medium along sample directions
    from .operators import qp_conorm, qp_norm

    X = probe_points(spec.domain, 8, seed=spec.seed)
    th = np.linspace(0.0, np.pi, q["directions"], endpoint=False)
    rows = []
    for k, x in enumerate(X):
        for t in th:
            p = np.array([np.cos(t), np.sin(t)] + [0.0] * (spec.n - 2))
            rows.append((k, *x, *p, qp_conorm(spec.triple, x, p), qp_norm(spec.triple, x, p)))
    cols = (("point",) + tuple("xyz"[a] for a in range(spec.n))
            + tuple(f"p{a}" for a in range(spec.n)) + ("qp_conorm", "qp_norm"))
    write_csv(os.path.join(out, "qp_speed.csv"), cols, rows)
    return [res], {}


def cmd_convergence(spec, out):
    c = spec.convergence
    res = ex.run_solver_health(spec.seed, c["nx_energy"], c["self_grids"], spec.T, spec.cfl, c["T"],
                               triple=spec.triple, source=spec.source)
    write_rows(os.path.join(out, "solver_health.csv"), res.rows)
    dt = res.details["energy_dt"]
    write_csv(os.path.join(out, "energy.csv"), ("step", "t", "E"),
              ((k, (k + 0.5) * dt, e) for k, e in enumerate(res.details["energy"])))
    return [res], {"energy_dt": dt}


def cmd_quadrant(spec, out):
    res = ex.run_quadrant(spec.preset, spec.n, spec.checks["points"], spec.seed)
    write_rows(os.path.join(out, "quadrant.csv"), res.rows)
    return [res], {"preset": spec.preset}


COMMANDS = {
    "check-operators": cmd_check_operators,
    "run-dn": cmd_run_dn,
    "compare-gauge": cmd_compare_gauge,
    "scaling-check": cmd_scaling_check,
    "qp-speed": cmd_qp_speed,
    "convergence": cmd_convergence,
    "table1-preset": cmd_quadrant,
}
assert set(COMMANDS) == set(KINDS)


def _versions():
    import numba
    import scipy

    return {"elastogauge": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def build_parser():
    parser = argparse.ArgumentParser(prog="elastogauge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in KINDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML experiment file (defaults when omitted)")
        p.add_argument("--out", help="output directory (default: out/<subcommand>)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="numba thread count")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        spec = parse_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", "seed")
            spec.seed = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("thread count must be positive", "threads")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or os.path.join("out", args.command)
    if spec.backend is not None and ENV_VAR not in os.environ:
        os.environ[ENV_VAR] = spec.backend
    set_threads(args.threads)
    try:
        results, audit = COMMANDS[args.command](spec, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ElastoGaugeError as exc:
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for r in results:
        print(r.line())
    gated = [r.passed for r in results if r.passed is not None]
    code = EXIT_PASS if all(gated) else EXIT_GATE
    write_json(os.path.join(out, "manifest.json"), {
        "command": args.command, "config": args.config, "config_hash": spec.config_hash,
        "seed": spec.seed, "backend": get_backend(), "threads": args.threads,
        "versions": _versions(), "wall_time": time.perf_counter() - t0, "exit_code": code,
        "results": [{"key": r.key, "title": r.title, "passed": r.passed, "summary": r.summary,
                     "runtime": r.runtime} for r in results],
        "audit": audit,
    })
    return code


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
