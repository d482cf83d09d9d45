"""Command-line front end: ``singhopf <command> [options]``.

Every written file gets a ``<name>.prov.json`` sidecar holding the config
hash, the package version and the tolerances in force. Numeric CSVs use 17
significant digits. Exit codes: 0 success, 1 numerical failure, 2 bad
arguments or config.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _io
from . import diagrams as D
from . import equilibria as EQ
from . import integrate as I
from . import koper as K
from . import manifolds as M
from . import tangency as TG
from .errors import SingHopfError
from .models import ModelId, ParameterSet, as_model, params_from_dict

CURVE_KINDS = ("SN", "Hopf", "PD", "LPC", "NS", "T")


class ConfigError(Exception):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _range(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None


def _grid(text: str) -> list[float]:
    """``lo:hi:n`` (inclusive, n points) or a comma list."""
    parts = text.split(":")
    try:
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:n or a comma list, got {text!r}") from None


def _vec3(text: str) -> list[float]:
    v = [float(s) for s in text.split(",")]
    if len(v) != 3:
        raise argparse.ArgumentTypeError("expected x,y,z")
    return v


def _abc(p: argparse.ArgumentParser, mu: bool = False):
    if mu:
        p.add_argument("--mu", type=float, default=0.0015)
    p.add_argument("--A", type=float, default=-0.05)
    p.add_argument("--B", type=float, default=0.001)
    p.add_argument("--C", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singhopf", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="JSON file of option values")
    ap.add_argument("--out", type=Path, default=Path("singhopf_out"))
    ap.add_argument("--workers", type=int, default=None,
                    help="parallel workers (default: SINGHOPF_WORKERS or CPU count)")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one trajectory")
    s.add_argument("--model", default=ModelId.RESCALED_QUADRATIC.value)
    s.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--x0", type=_vec3, default=[0.01, 0.0, 0.0])
    s.add_argument("--t-max", type=float, default=100.0)
    s.add_argument("--rtol", type=float, default=1e-10)
    s.add_argument("--atol", type=float, default=1e-12)
    s.add_argument("--max-step", type=float, default=0.1)

    s = sub.add_parser("equilibria", help="equilibria with eigenvalues and class")
    _abc(s, mu=True)

    s = sub.add_parser("loci", help="SN/Hopf/ZH/GH values over an A-grid (CSV on stdout)")
    s.add_argument("--B", type=float, default=0.001)
    s.add_argument("--C", type=float, default=0.1)
    s.add_argument("--a-grid", type=_grid, default=_grid("-0.15:0.05:21"))

    s = sub.add_parser("sweep", help="ordered bifurcation events along mu")
    _abc(s)
    s.add_argument("--mu", type=_range, default=(0.0, 0.0025))
    s.add_argument("--no-tangency", action="store_true")
    s.add_argument("--t-max", type=float, default=5000.0)

    for name in ("curve", "diagram"):
        s = sub.add_parser(name, help="(mu, A) bifurcation curves")
        s.add_argument("--B", type=float, default=0.001)
        s.add_argument("--C", type=float, default=0.1)
        s.add_argument("--kind", action="append", choices=CURVE_KINDS, default=None)
        s.add_argument("--a-grid", type=_grid, default=_grid("-0.12:0.02:15"))
        s.add_argument("--mu-window", type=_range, default=(-0.005, 0.005))

    s = sub.add_parser("tangency", help="onset of escape of the unstable manifold")
    _abc(s)
    s.add_argument("--mu", type=_range, default=(0.0014, 0.0017))
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--n-grid", type=int, default=10)
    s.add_argument("--t-max", type=float, default=5000.0)
    s.add_argument("--two-pass", action="store_true",
                   help="coarse single-worker bracket, then a fine parallel pass")
    s.add_argument("--trace", type=_range, default=None, metavar="A_LO:A_HI",
                   help="also trace the tangency curve over this A-range")
    s.add_argument("--step", type=float, default=0.005)

    s = sub.add_parser("regions", help="analytic (B, C) region data")
    s.add_argument("--B", type=float, default=0.001)
    s.add_argument("--C", type=float, default=0.1)

    s = sub.add_parser("koper", help="Koper model scan and MMO time series")
    s.add_argument("--eps1", type=float, default=0.1)
    s.add_argument("--eps2", type=float, default=1.0)
    s.add_argument("--k", type=float, default=-10.0)
    s.add_argument("--lambda-range", type=_range, default=(-9.0, -5.0))
    s.add_argument("--lambda-mmo", type=float, default=-7.5)
    s.add_argument("--t-max", type=float, default=2000.0)
    s.add_argument("--with-tangency", action="store_true")

    s = sub.add_parser("portrait", help="manifold meshes and section crossings")
    _abc(s, mu=True)
    s.add_argument("--n-rays", type=int, default=32)
    s.add_argument("--t-max", type=float, default=5000.0)
    s.add_argument("--section-y", type=float, default=0.5)
    return ap


# -- config handling ---------------------------------------------------------------


def apply_config(ap: argparse.ArgumentParser, args: argparse.Namespace, argv) -> argparse.Namespace:
    """Fill options from ``--config``; flags given on the command line win."""
    if args.config is None:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "command" in cfg and cfg["command"] != args.command:
        raise ConfigError(f"config is for command {cfg['command']!r}", key="command")
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    known = set(vars(args))
    sub = _subparser(ap, args.command)
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest == "command":
            continue
        if dest not in known or dest == "config":
            raise ConfigError(f"unknown config key {key!r}", key=key)
        if dest in explicit:
            continue
        setattr(args, dest, _coerce(sub, ap, dest, value, key))
    return args


def _subparser(ap, command):
    for action in ap._subparsers._group_actions:
        return action.choices[command]
    return None


def _coerce(sub, ap, dest, value, key):
    for parser in (sub, ap):
        for action in parser._actions:
            if action.dest != dest:
                continue
            conv = action.type
            try:
                if isinstance(value, list) and conv in (_range, _vec3):
                    return conv(":".join(map(str, value)) if conv is _range
                                else ",".join(map(str, value)))
                if isinstance(value, list) and conv is _grid:
                    return [float(v) for v in value]
                if conv is not None and not isinstance(value, list):
                    return conv(str(value)) if conv in (_range, _grid, _vec3) else conv(value)
                return value
            except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", key=key) from None
    return value


# -- output helpers ---------------------------------------------------------------------

class Output:
    def __init__(self, root: Path, config: dict, tolerances: dict | None = None):
        self.root = Path(root)
        self.prov = _io.provenance(config, tolerances)
        self.written: list[str] = []

    def _sidecar(self, path: Path):
        _io.write_json(path.with_name(path.name + ".prov.json"), self.prov)
        self.written.append(str(path))

    def csv(self, rel: str, header, rows) -> Path:
        path = _io.write_csv(self.root / rel, header, rows)
        self._sidecar(path)
        return path

    def json(self, rel: str, obj) -> Path:
        path = _io.write_json(self.root / rel, obj)
        self._sidecar(path)
        return path

    def mesh(self, rel: str, mesh: M.ManifoldMesh) -> Path:
        path = mesh.export(self.root / rel, self.prov)
        self.written.append(str(path))
        return path


def _emit(obj) -> None:
    sys.stdout.write(_io.dumps(obj) + "\n")


# -- commands ---------------------------------------------------------------------------

def cmd_simulate(args, out: Output):
    model = as_model(args.model)
    raw = {}
    for item in args.param:
        k, _, v = item.partition("=")
        raw[k.strip()] = float(v)
    if not raw and model is ModelId.RESCALED_QUADRATIC:
        raw = {"mu": 0.0015, "A": -0.05, "B": 0.001, "C": 0.1}
    p = params_from_dict(model, raw)
    cfg = I.IntegratorConfig(rel_tol=args.rtol, abs_tol=args.atol, max_step=args.max_step,
                             t_max=args.t_max)
    tr = I.integrate(model, np.asarray(args.x0), p, cfg, [I.DEFAULT_ESCAPE])
    path = out.csv("trajectory.csv", ["t", "X", "Y", "Z"], np.column_stack([tr.times, tr.states]))
    _emit({"termination": tr.termination.value, "final_time": tr.final_time,
           "final_state": tr.final_state[:3], "n_points": len(tr.times), "file": str(path)})


def cmd_equilibria(args, out: Output):
    reps = EQ.find_equilibria(ParameterSet(args.mu, args.A, args.B, args.C))
    _emit([r.to_dict() for r in reps])


def _loci_rows(B, C, a_grid):
    zh = EQ.zero_hopf_A(B, C)
    gh = [g.a_cap for g in EQ.generalized_hopf_A(B, C)] if B != 0 else []
    for A in a_grid:
        try:
            sn = EQ.saddle_node_locus(A, B, C)[0]
        except SingHopfError:
            sn = float("nan")
        try:
            h = EQ.hopf_locus(A, B, C)
            hopf, l1 = h.mu_star, h.l1
        except SingHopfError:
            hopf = l1 = float("nan")
        yield [A, sn, hopf, l1, zh, gh[0] if gh else float("nan"),
               gh[1] if len(gh) > 1 else float("nan")]


LOCI_HEADER = ["A", "mu_SN", "mu_Hopf", "l1", "A_ZH", "A_GH1", "A_GH2"]


def cmd_loci(args, out: Output):
    rows = list(_loci_rows(args.B, args.C, args.a_grid))
    out.csv("curves/loci.csv", LOCI_HEADER, rows)
    sys.stdout.write(",".join(LOCI_HEADER) + "\n")
    for r in rows:
        sys.stdout.write(",".join(_io.fmt(v) for v in r) + "\n")


def cmd_sweep(args, out: Output):
    rec = D.sweep_mu(args.A, args.B, args.C, args.mu, tangency=not args.no_tangency,
                     t_max=args.t_max, workers=args.workers)
    out.json("sweeps/sweep.json", rec.to_dict())
    _emit(rec.to_dict())


def cmd_curve(args, out: Output):
    kinds = args.kind or list(CURVE_KINDS)
    manifest = {"B": args.B, "C": args.C, "curves": {}}
    for kind in kinds:
        c = D.trace_curve(kind, args.B, args.C, args.a_grid, args.mu_window,
                          workers=args.workers)
        out.csv(f"curves/{kind}.csv", ["A", "mu"], sorted(c.points))
        ends = [list(c.points[0]), list(c.points[-1])] if c.points else []
        manifest["curves"][kind] = {"file": f"{kind}.csv", "n_points": len(c.points),
                                    "endpoints": ends, "annotations": c.annotations,
                                    "gaps": c.gaps}
    manifest["canard_lines"] = D.canard_lines(args.B, args.C)
    manifest["region"] = D.region_classify(args.B, args.C).to_dict() if args.B != 0 else None
    out.json("curves/manifest.json", manifest)
    _emit(manifest)


def cmd_tangency(args, out: Output):
    p = ParameterSet(args.mu[0], args.A, args.B, args.C)
    lo, hi = args.mu
    if args.two_pass:
        coarse = TG.find_tangency(p, lo, hi, tol=max(10 * args.tol, 1e-5), n_grid=args.n_grid,
                                  t_max=args.t_max, workers=1)
        w = coarse.bracket_width
        lo, hi = coarse.mu - w, coarse.mu + w
    tp = TG.find_tangency(p, lo, hi, tol=args.tol, n_grid=args.n_grid, t_max=args.t_max,
                          workers=args.workers)
    pts = [tp]
    if args.trace is not None:
        pts = TG.trace_tangency_curve(args.B, args.C, tp, args.trace, args.step, tol=args.tol,
                                      n_grid=args.n_grid, t_max=args.t_max,
                                      workers=args.workers)
    pts = sorted(pts, key=lambda q: q.a_cap)
    out.csv("curves/T.csv", ["A", "mu", "bracket_width"],
            [[q.a_cap, q.mu, q.bracket_width] for q in pts])
    out.json("curves/T_points.json", [q.to_dict() for q in pts])
    _emit(tp.to_dict())


def cmd_regions(args, out: Output):
    rep = D.region_classify(args.B, args.C).to_dict()
    rep["canard_lines"] = D.canard_lines(args.B, args.C)
    rep["orbit_flip_points"] = D.orbit_flip_point(args.B, args.C)
    rep["zero_hopf_A"] = EQ.zero_hopf_A(args.B, args.C)
    rep["generalized_hopf_A"] = [g.a_cap for g in EQ.generalized_hopf_A(args.B, args.C)]
    _emit(rep)


def cmd_koper(args, out: Output):
    res = K.koper_scan(args.eps1, args.eps2, args.k, args.lambda_range,
                       with_tangency=args.with_tangency)
    mmo = K.detect_mmo(args.eps1, args.eps2, args.k, args.lambda_mmo, args.t_max)
    out.json("koper/scan.json", res.to_dict())
    out.json("koper/mmo.json", {**mmo.to_dict(), "lambda": args.lambda_mmo, "t_max": args.t_max})
    out.csv("koper/mmo.csv", ["t", "x", "y", "z"], np.column_stack([mmo.times, mmo.states[:, :3]]))
    _emit({"scan": res.to_dict(), "mmo": mmo.to_dict()})


def cmd_portrait(args, out: Output):
    p = ParameterSet(args.mu, args.A, args.B, args.C)
    wu = M.unstable_manifold_mesh(p, n_rays=args.n_rays, t_max=args.t_max, workers=args.workers)
    sa = M.slow_manifold(p, "attracting", workers=args.workers)
    sr = M.slow_manifold(p, "repelling", workers=args.workers)
    for mesh in (wu, sa, sr):
        out.mesh(f"meshes/{mesh.label.value}", mesh)
    plane = I.PlaneCrossing((0.0, 1.0, 0.0), args.section_y, 1, 0)
    cross = M.section_portrait(plane, {"WuEf": wu, "Sa": sa, "Sr": sr})
    rows = [[name, *pt] for name in sorted(cross) for pt in cross[name]]
    out.csv("meshes/section.csv", ["object", "X", "Y", "Z"], rows)
    fates = {}
    for f in wu.fates:
        fates[f.value] = fates.get(f.value, 0) + 1
    _emit({"fates": fates, "section_points": {k: len(v) for k, v in cross.items()},
           "files": out.written})


COMMANDS = {"simulate": cmd_simulate, "equilibria": cmd_equilibria, "loci": cmd_loci,
            "sweep": cmd_sweep, "curve": cmd_curve, "diagram": cmd_curve,
            "tangency": cmd_tangency, "regions": cmd_regions, "koper": cmd_koper,
            "portrait": cmd_portrait}


def _error(kind: str, message: str, code: int, key: str | None = None) -> int:
    report = {"error": kind, "message": message}
    if key is not None:
        report["key"] = key
    sys.stderr.write(json.dumps(report) + "\n")
    return code


def _join_negative(argv: list[str]) -> list[str]:
    # argparse refuses values like "-0.1:0" after an option; glue them on
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if (a.startswith("--") and "=" not in a and i + 1 < len(argv)
                and len(argv[i + 1]) > 1 and argv[i + 1][0] == "-"
                and (argv[i + 1][1].isdigit() or argv[i + 1][1] == ".")):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def main(argv=None) -> int:
    argv = _join_negative(list(sys.argv[1:] if argv is None else argv))
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        args = apply_config(ap, args, argv)
    except ConfigError as exc:
        return _error("config", str(exc), 2, exc.key)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "out", "workers")}
    out = Output(args.out, config)
    try:
        COMMANDS[args.command](args, out)
    except (SingHopfError, ValueError) as exc:
        return _error(type(exc).__name__, str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
