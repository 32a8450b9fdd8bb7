"""
Command-line harness: ``qfs <subcommand> [options]``.

Every subcommand writes a CSV table (header row, 17 significant digits) to
``--out DIR/<subcommand>.csv`` or to stdout, and a JSON summary next to it (or
to stderr). With ``--check`` the declared tolerances are tested and the exit
status is 1 if any of them fails. Invalid options exit with status 2.

Options may also come from ``--config FILE.json``; its keys are option names
(``N_sweep`` or ``N-sweep``) and flags given on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import experiments as ex
from .core import QfsConfig, QfsConfigurationError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Invalid experiment configuration."""


# ------------------------------------------------------------------ parsing

def parse_sweep(text, even=False, name="N"):
    """'100:600:50' (inclusive) or '100,200,300' -> list of ints."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step <= 0:
                raise UsageError(f"{name} sweep step must be positive")
            vals = list(range(lo, hi + 1, step))
        else:
            vals = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse {name} sweep {text!r}: expected 'lo:hi:step' or a comma list") from exc
    if not vals:
        raise UsageError(f"{name} sweep {text!r} is empty")
    if even and any(v % 2 for v in vals):
        raise UsageError(f"{name} values must be even, got {[v for v in vals if v % 2]}")
    return vals


def parse_range(text, default_n=6):
    """'lo:hi[:n]' -> n equispaced floats."""
    try:
        parts = [float(p) for p in str(text).split(":")]
    except ValueError as exc:
        raise UsageError(f"cannot parse range {text!r}") from exc
    if len(parts) == 1:
        return [parts[0]]
    if len(parts) not in (2, 3):
        raise UsageError(f"range {text!r} must be lo:hi or lo:hi:n")
    n = int(parts[2]) if len(parts) == 3 else default_n
    return list(np.linspace(parts[0], parts[1], n))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.17g}"
    return str(v)


def format_csv(rows, columns=None) -> str:
    """Rows (dicts) as CSV text with 17-significant-digit floats."""
    if columns is None:
        columns = []
        for r in rows:
            columns += [c for c in r if c not in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


class Checks:
    """Collects named tolerance checks."""

    def __init__(self):
        self.items = []

    def add(self, name, ok, detail=""):
        self.items.append({"name": name, "ok": bool(ok), "detail": detail})

    @property
    def ok(self):
        return all(c["ok"] for c in self.items)

    def report(self, stream):
        for c in self.items:
            print(f"{'PASS' if c['ok'] else 'FAIL'} {c['name']}: {c['detail']}", file=stream)


def _emit(args, rows, summary, checks, columns=None, extra_files=None, table_stream=None):
    text = format_csv(rows, columns)
    summary = dict(summary)
    if args.check:
        summary["checks"] = checks.items
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.csv").write_text(text)
        (out / f"{args.command}_summary.json").write_text(json.dumps(_jsonable(summary), indent=2))
        for name, content in (extra_files or {}).items():
            (out / name).write_text(content)
    else:
        (table_stream or sys.stdout).write(text)
        print(json.dumps(_jsonable(summary)), file=sys.stderr)
    if args.check:
        checks.report(sys.stderr)
        return EXIT_OK if checks.ok else EXIT_CHECK_FAILED
    return EXIT_OK


# --------------------------------------------------------------- subcommands

def _converge_chunk(kw):
    return ex.converge2d(**kw)


def cmd_converge2d(args):
    if args.N is not None:
        Ns = [args.N]
        if args.N % 2:
            raise UsageError("N must be even")
    else:
        Ns = parse_sweep(args.N_sweep, even=True)
    if min(Ns) < 8:
        raise UsageError("N must be at least 8")
    if not 0 < args.eps < 1:
        raise UsageError("eps must be in (0, 1)")
    kw = dict(pde=args.pde, mixture=args.mixture, variant=args.variant, eps=args.eps, side=args.side,
              dist=args.dist, oracle=args.target in ("near", "both") and not args.no_oracle,
              k=args.k, mu=args.mu)
    if args.workers > 1 and len(Ns) > 1:
        chunks = [Ns[i::args.workers] for i in range(args.workers)]
        with ProcessPoolExecutor(args.workers) as pool:
            parts = list(pool.map(_converge_chunk, [dict(kw, Ns=c) for c in chunks if c]))
        raw = sorted((r for p in parts for r in p), key=lambda r: r["N"])
    else:
        raw = ex.converge2d(Ns=Ns, **kw)
    rows = []
    for r in raw:
        row = {"N": r["N"]}
        for tgt in (("near", "far") if args.target == "both" else (args.target,)):
            pre = f"{tgt}_" if args.target == "both" else ""
            row[pre + "qfs_err"] = r[f"qfs_{tgt}"]
            row[pre + "plain_err"] = r[f"plain_{tgt}"]
            if tgt == "near":
                row[pre + "oracle_err"] = r.get("oracle_near")
        row.update(nyquist_ratio=r["nyquist_ratio"], P=r["P"], delta=r["delta"],
                   fallback=r["fallback"], seconds=r["seconds"])
        rows.append(row)
    summary = ex.summarize_convergence(raw, args.eps)
    summary.update(pde=args.pde, mixture=args.mixture, variant=args.variant, eps=args.eps)
    checks = Checks()
    if args.check:
        rel = (summary["rate"] - summary["expected"]) / summary["expected"]
        checks.add("rate", abs(rel) <= 0.25,
                   f"measured {summary['rate']:.4g} vs {summary['expected']:.4g} ({rel:+.1%}, band 25%)")
        checks.add("saturation", summary["saturation"] <= 100 * args.eps,
                   f"{summary['saturation']:.3g} <= {100 * args.eps:.3g}")
        lag = summary["far_lag"]
        checks.add("far_tracks_plain", lag is not None and lag <= 2
                   and summary["far_final"] <= 100 * args.eps,
                   f"lag {lag} steps, final {summary['far_final']:.3g}")
    return _emit(args, rows, summary, checks)


def cmd_spectrum(args):
    if args.pde != "stokes":
        raise UsageError("spectrum is implemented for --pde stokes")
    if args.N % 2:
        raise UsageError("N must be even")
    if args.grid_upsilon:
        ups = parse_range(args.grid_upsilon, args.grid_n)
        pairs = [(u, uc) for u in ups for uc in ups]
    else:
        pairs = [(args.upsilon, args.upsilon_c)]
    from .curve2d import starfish_curve
    from .kernels import KernelSpec
    from .reference import kress_nystrom_matrix

    curve = starfish_curve()
    K = kress_nystrom_matrix(curve, args.N, KernelSpec("stokes2d", 1.0, 1.0, mu=args.mu))
    rows, eig, design = [], None, None
    if (args.upsilon, args.upsilon_c) not in pairs:
        pairs.append((args.upsilon, args.upsilon_c))
    for u, uc in pairs:
        try:
            s = ex.stokes_spectrum(args.N, u, uc, args.eps, args.mu, curve=curve, kress=K)
        except QfsConfigurationError as exc:
            rows.append({"upsilon": u, "upsilon_c": uc, "error": str(exc)})
            continue
        rows.append({"upsilon": u, "upsilon_c": uc, "kappa_qfs": s["kappa_qfs"],
                     "kappa_kress": s["kappa_kress"], "ratio": s["ratio"],
                     "frac_near_half": s["frac_near_half"]})
        if (u, uc) == (args.upsilon, args.upsilon_c):
            eig, design = s["eigenvalues"], rows[-1]
    checks = Checks()
    if args.check:
        # the grid maps the parameter space; tolerances apply at the design point
        if design is None:
            checks.add("design_point_valid", False, rows[-1].get("error", ""))
        else:
            r = design
            checks.add("ratio", 0.5 <= r["ratio"] <= 2, f"{r['ratio']:.3f} in [0.5, 2]")
            checks.add("eigenvalue_cluster", r["frac_near_half"] >= 0.8,
                       f"{r['frac_near_half']:.3f} >= 0.8 within 0.25 of 1/2")
            kk = r["kappa_kress"]
            checks.add("kappa_kress", abs(kk - 7.2) <= 0.2 * 7.2, f"{kk:.3f} vs 7.2 +- 20%")
    extra = {}
    if eig is not None:
        extra["spectrum_eigenvalues.csv"] = format_csv([{"re": z.real, "im": z.imag} for z in eig])
    return _emit(args, rows, {"N": args.N, "mu": args.mu, "points": len(rows)}, checks, extra_files=extra)


def cmd_eigendecay(args):
    deltas = [float(d) for d in str(args.delta).split(",")]
    if any(d <= 0 for d in deltas):
        raise UsageError("delta must be positive")
    rows, summary, checks = [], {}, Checks()
    for d in deltas:
        e = ex.eigen_decay(d, args.N)
        keep = e["computed"] > 1e-13
        rel = np.abs(e["computed"] - e["aliased"]) / e["aliased"]
        rel[e["n"] == 0] = np.nan
        for n, c, law, al, r in zip(e["n"], e["computed"], e["law"], e["aliased"], rel):
            rows.append({"delta": d, "n": n, "computed": c, "law": law, "aliased_law": al, "rel_err": r})
        worst = float(np.nanmax(np.where(keep, rel, np.nan)))
        summary[f"max_rel_err_delta_{d:g}"] = worst
        if args.check:
            checks.add(f"eigen_decay[delta={d:g}]", worst <= 1e-10,
                       f"max rel err {worst:.3g} <= 1e-10 over modes above 1e-13")
    s = ex.dalias_smallest_singular_value(args.eps, args.N, args.radius)
    summary["dalias"] = s
    if args.check:
        lo, hi = 0.1 * s["sqrt_eps"], 10 * s["sqrt_eps"]
        checks.add("smallest_singular_value", lo <= s["smin"] <= hi,
                   f"{s['smin']:.3g} in [{lo:.3g}, {hi:.3g}] (radius {args.radius:g})")
    return _emit(args, rows, summary, checks)


def _load_or_generate(args, outer_radius=None, sampler=None):
    from .multibody import BodyCollection, generate_bodies

    if args.geometry:
        return BodyCollection.from_json(json.loads(Path(args.geometry).read_text()))
    return generate_bodies(args.K, args.dmin, 1.0, sampler, seed=args.seed, outer_radius=outer_radius)


def cmd_multibody_helmholtz(args):
    from .multibody import spiral_sampler

    levels = parse_sweep(args.levels, name="level")
    kl = parse_sweep(args.kress_levels, name="level") if args.kress_levels else []
    coll = _load_or_generate(args, sampler=spiral_sampler())
    rows = ex.helmholtz_levels(coll, k=args.k, levels=levels, kress_levels=kl, gmres_tol=args.gmres_tol,
                               backend=args.backend, target=(args.x, args.y))
    checks = Checks()
    if args.check:
        d = [r["self_diff"] for r in rows[1:]]
        checks.add("levels", len(rows) >= 4, f"{len(rows)} levels")
        checks.add("self_convergence", bool(d) and d[-1] < 1e-11, f"finest {d[-1] if d else None}")
        checks.add("spectral_decrease", all(b < a for a, b in zip(d, d[1:])) if len(d) > 1 else False,
                   "self differences decrease")
        for r in rows:
            if "kress_diff" in r:
                checks.add(f"kress_diff[level={r['level']}]", r["kress_diff"] < 1e-10, f"{r['kress_diff']:.3g}")
                checks.add(f"kress_iters[level={r['level']}]", abs(r["kress_iters"] - r["iters"]) <= 2,
                           f"qfs {r['iters']} vs kress {r['kress_iters']}")
    return _emit(args, rows, {"K": coll.K, "k": args.k, "dmin": coll.dmin}, checks)


def cmd_multibody_stokes(args):
    from .multibody import disk_sampler

    levels = parse_sweep(args.levels, name="level")
    kl = parse_sweep(args.kress_levels, name="level") if args.kress_levels else []
    coll = _load_or_generate(args, outer_radius=args.R, sampler=disk_sampler(args.R - 1.0 - args.dmin))
    cfg = QfsConfig(eps=args.eps, speed_fraction=0.5)
    rows = ex.stokes_levels(coll, levels=levels, kress_levels=kl, gmres_tol=args.gmres_tol,
                            backend=args.backend, cfg=cfg)
    checks = Checks()
    if args.check:
        last = rows[-1]
        checks.add("u_self_convergence", last["u_self_diff"] < 1e-8, f"{last['u_self_diff']:.3g} < 1e-8")
        checks.add("p_self_convergence", last["p_self_diff"] < 1e-8, f"{last['p_self_diff']:.3g} < 1e-8")
        checks.add("pressure_reference", last["pressure_ref_err"] < 1e-9,
                   f"{last['pressure_ref_err']:.3g} < 1e-9")
    return _emit(args, rows, {"K": coll.K, "R": args.R, "dmin": coll.dmin}, checks)


def cmd_laplace3d(args):
    Nvs = parse_sweep(args.Nv_sweep, name="Nv")
    if min(Nvs) < 8:
        raise UsageError("Nv must be at least 8")
    params = {k: getattr(args, k) for k in ("delta", "delta_c", "rho") if getattr(args, k) is not None}
    res = ex.laplace3d_study(args.K, args.dmin, Nvs, seed=args.seed, **params)
    rows = res["rows"]
    cap = ex.sphere_capacitance(args.capacitance_Nv, 2.0, **params)
    summary = {"K": args.K, "dmin": args.dmin, "target": res["target"], "capacitance": cap,
               "centers": [b.center for b in res["bodies"]]}
    checks = Checks()
    if args.check:
        err = abs(cap["u"] - cap["exact"])
        checks.add("sphere_capacitance", err < 1e-6, f"|u(2) - 1/2| = {err:.3g}")
        d = [r["self_diff"] for r in rows[1:]]
        checks.add("monotone", all(b < a for a, b in zip(d, d[1:])), f"self differences {d}")
        digits = d[-1] / abs(rows[-1]["u"]) if d else float("nan")
        checks.add("digits", digits <= 1e-4, f"relative self difference {digits:.3g} <= 1e-4")
        it = [r["iters"] for r in rows if r["Nv"] >= 24]
        checks.add("iterations", len(it) > 0 and max(it) - min(it) <= 2, f"{it}")
    return _emit(args, rows, summary, checks)


def cmd_geometry_gen(args):
    from .multibody import disk_sampler, pairwise_separations, spiral_sampler

    sampler = spiral_sampler() if args.sampler == "spiral" else None
    if args.outer_radius is not None:
        sampler = disk_sampler(args.outer_radius - 1.0 - args.dmin)
    if args.K < 0 or args.dmin <= 0:
        raise UsageError("need K >= 0 and dmin > 0")
    from .multibody import generate_bodies

    coll = generate_bodies(args.K, args.dmin, 1.0, sampler, seed=args.seed, outer_radius=args.outer_radius)
    rows = [{"i": i, "j": j, "separation": s} for i, j, s in pairwise_separations(coll)]
    geo = json.dumps(_jsonable(coll.to_json()), indent=2)
    checks = Checks()
    smin = min((r["separation"] for r in rows), default=float("inf"))
    if args.check:
        checks.add("min_separation", smin >= args.dmin, f"{smin:.6g} >= {args.dmin:g}")
    if not args.out:
        print(geo)
    # without --out stdout carries the geometry JSON alone
    return _emit(args, rows, {"K": coll.K, "min_separation": smin}, checks,
                 extra_files={"geometry.json": geo}, table_stream=sys.stderr)


def cmd_ptr_rate(args):
    r = ex.ptr_rate()
    rows = [{"N": n, "err": e} for n, e in zip(r["N"], r["err"])]
    up = ex.upsampling_exactness()
    checks = Checks()
    if args.check:
        rel = (r["rate"] - r["expected"]) / r["expected"]
        checks.add("ptr_rate", abs(rel) <= 0.1, f"{r['rate']:.4f} vs arccosh(1.5) = {r['expected']:.4f}")
        checks.add("upsampling_exactness", up <= 1e-12, f"{up:.3g} <= 1e-12")
    return _emit(args, rows, {"rate": r["rate"], "expected": r["expected"], "upsampling_err": up}, checks)


def cmd_gauss_law(args):
    rows = []
    for eps in [float(e) for e in str(args.eps_list).split(",")]:
        r2 = ex.gauss_law_2d(eps, args.N)
        rows.append({"dim": 2, "eps": eps, **r2})
        r3 = ex.gauss_law_3d(args.Nv)
        rows.append({"dim": 3, "eps": eps, **r3})
    checks = Checks()
    if args.check:
        for r in rows:
            worst = max(v for k, v in r.items() if k not in ("dim", "eps"))
            checks.add(f"gauss_{r['dim']}d[eps={r['eps']:g}]", worst < 10 * r["eps"],
                       f"max|u| {worst:.3g} < {10 * r['eps']:.3g}")
    return _emit(args, rows, {}, checks)


def cmd_capacity_fix(args):
    r = ex.capacity_fix_study(args.eps, args.N, args.variant)
    checks = Checks()
    if args.check:
        checks.add("without_fix_fails", r["without_fix"] > 1e-2, f"{r['without_fix']:.3g} > 1e-2")
        checks.add("with_fix", r["with_fix"] < 10 * args.eps, f"{r['with_fix']:.3g} < {10 * args.eps:.3g}")
    return _emit(args, [dict(eps=args.eps, N=args.N, **r)], r, checks)


def cmd_shift_geometry(args):
    r = ex.shift_geometry(variant=args.offset_variant)
    checks = Checks()
    if args.check:
        a, b = r["delta0_interior"], r["delta0_exterior"]
        checks.add("delta0_interior", abs(a - 0.168) <= 0.05 * 0.168, f"{a:.4f} vs 0.168 +- 5%")
        checks.add("delta0_exterior", abs(b - 0.09) <= 0.1 * 0.09, f"{b:.4f} vs 0.09 +- 10%")
    return _emit(args, [r], r, checks)


def cmd_stability(args):
    Ns = parse_sweep(args.N_sweep, even=True)
    rows = ex.stability_study(args.eps, Ns)
    checks = Checks()
    if args.check:
        for r in rows:
            gain = np.log10(r["explicit"] / max(r["parenthesized"], 1e-300))
            checks.add(f"ordering[N={r['N']}]", gain >= 2, f"{gain:.2f} digits")
    return _emit(args, rows, {}, checks)


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qfs", description="QFS experiments and validation harness.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--out", help="output directory (default: CSV to stdout)")
        sp.add_argument("--check", action="store_true", help="test tolerances; exit 1 on failure")
        sp.add_argument("--config", help="JSON file of option values")
        sp.add_argument("--seed", type=int, default=None)
        return sp

    sp = add("converge2d", cmd_converge2d, "one-body error vs N on the starfish")
    sp.add_argument("--pde", choices=["laplace", "helmholtz", "stokes"], default="laplace")
    sp.add_argument("--mixture", choices=sorted(ex.MIXTURES), default="slp")
    sp.add_argument("--variant", type=str.upper, choices=["B", "D"], default="D")
    sp.add_argument("--eps", type=float, default=1e-12)
    sp.add_argument("--N", type=int, default=None)
    sp.add_argument("--N-sweep", dest="N_sweep", default="100:600:50")
    sp.add_argument("--target", choices=["near", "far", "both"], default="both")
    sp.add_argument("--side", choices=["exterior", "interior"], default="exterior")
    sp.add_argument("--dist", type=float, default=1e-4)
    sp.add_argument("--k", type=float, default=20.0)
    sp.add_argument("--mu", type=float, default=0.7)
    sp.add_argument("--no-oracle", action="store_true", help="skip the oracle-on-samples column")
    sp.add_argument("--workers", type=int, default=1)

    sp = add("spectrum", cmd_spectrum, "condition number of the QFS-D Stokes operator vs Kress")
    sp.add_argument("--pde", choices=["stokes", "laplace", "helmholtz"], default="stokes")
    sp.add_argument("--N", type=int, default=200)
    sp.add_argument("--eps", type=float, default=1e-12)
    sp.add_argument("--mu", type=float, default=0.7)
    sp.add_argument("--upsilon", type=float, default=1.3)
    sp.add_argument("--upsilon-c", dest="upsilon_c", type=float, default=1.5)
    sp.add_argument("--grid-upsilon", dest="grid_upsilon", default=None, help="lo:hi[:n] for both axes")
    sp.add_argument("--grid-n", dest="grid_n", type=int, default=6)

    sp = add("eigendecay", cmd_eigendecay, "concentric-circle eigenvalues and smallest singular value")
    sp.add_argument("--delta", default="0.1,0.2")
    sp.add_argument("--N", type=int, default=128)
    sp.add_argument("--eps", type=float, default=1e-12)
    sp.add_argument("--radius", type=float, default=1.0)

    sp = add("multibody-helmholtz", cmd_multibody_helmholtz, "refinement study of multibody scattering")
    sp.add_argument("--K", type=int, default=10)
    sp.add_argument("--k", type=float, default=10.0)
    sp.add_argument("--dmin", type=float, default=0.02)
    sp.add_argument("--levels", default="1:5")
    sp.add_argument("--kress-levels", dest="kress_levels", default="5")
    sp.add_argument("--gmres-tol", dest="gmres_tol", type=float, default=1e-12)
    sp.add_argument("--backend", default="dense")
    sp.add_argument("--geometry", default=None, help="geometry JSON from geometry-gen")
    sp.add_argument("--x", type=float, default=0.0)
    sp.add_argument("--y", type=float, default=0.0)
    sp.set_defaults(seed=3)

    sp = add("multibody-stokes", cmd_multibody_stokes, "refinement study of confined Stokes flow")
    sp.add_argument("--K", type=int, default=10)
    sp.add_argument("--R", type=float, default=15.0)
    sp.add_argument("--dmin", type=float, default=0.05)
    sp.add_argument("--eps", type=float, default=1e-11)
    sp.add_argument("--levels", default="2:4")
    sp.add_argument("--kress-levels", dest="kress_levels", default="")
    sp.add_argument("--gmres-tol", dest="gmres_tol", type=float, default=1e-9)
    sp.add_argument("--backend", default="dense")
    sp.add_argument("--geometry", default=None)
    sp.set_defaults(seed=1)

    sp = add("laplace3d", cmd_laplace3d, "ellipsoid-cluster self-convergence and sphere capacitance")
    sp.add_argument("--K", type=int, default=2)
    sp.add_argument("--dmin", type=float, default=0.1)
    sp.add_argument("--Nv-sweep", dest="Nv_sweep", default="16,24,32")
    sp.add_argument("--capacitance-Nv", dest="capacitance_Nv", type=int, default=24)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--delta-c", dest="delta_c", type=float, default=None)
    sp.add_argument("--rho", type=float, default=None)
    sp.set_defaults(seed=5)

    sp = add("geometry-gen", cmd_geometry_gen, "random body collection as JSON")
    sp.add_argument("--K", type=int, default=10)
    sp.add_argument("--dmin", type=float, default=0.05)
    sp.add_argument("--sampler", choices=["disk", "spiral"], default="disk")
    sp.add_argument("--outer-radius", dest="outer_radius", type=float, default=None)

    add("ptr-rate", cmd_ptr_rate, "trapezoid-rule rate and upsampling exactness")

    sp = add("gauss-law", cmd_gauss_law, "QFS double layer of a unit density at exterior targets")
    sp.add_argument("--eps-list", dest="eps_list", default="1e-4,1e-8,1e-12")
    sp.add_argument("--N", type=int, default=200)
    sp.add_argument("--Nv", type=int, default=24)

    sp = add("capacity-fix", cmd_capacity_fix, "unit-disk SLP with and without the charge row")
    sp.add_argument("--eps", type=float, default=1e-10)
    sp.add_argument("--N", type=int, default=120)
    sp.add_argument("--variant", type=str.upper, choices=["B", "D"], default="B")

    sp = add("shift-geometry", cmd_shift_geometry, "largest valid source and check shifts")
    sp.add_argument("--offset-variant", dest="offset_variant", choices=["imaginary", "offset"],
                    default="imaginary")

    sp = add("stability", cmd_stability, "parenthesized vs explicit source synthesis")
    sp.add_argument("--eps", type=float, default=1e-12)
    sp.add_argument("--N-sweep", dest="N_sweep", default="300,400,500")
    return p


def _apply_config(parser, argv):
    """Re-parse with JSON config values as defaults for the chosen subcommand."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error("config must be a JSON object of option values")
    sp = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sp._actions}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - known - {"command"})
    if unknown:
        parser.error(f"unknown config keys for {args.command}: {unknown}; valid keys: {sorted(known)}")
    sp.set_defaults(**{k: v for k, v in cfg.items() if k != "command"})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return args.func(args)
    except (UsageError, QfsConfigurationError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qfs {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
