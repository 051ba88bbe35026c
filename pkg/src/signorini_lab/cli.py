"""Command line entry point: config-driven pipeline plus one subcommand per analysis."""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .almgren import almgren_sweep, fitted_H_constant, hco_power_audit, ico_audit, lemma_exponent
from .coefficients import PRESETS, make_preset, require_hypotheses
from .errors import ConfigError, HypothesisError, SignoriniLabError, SolverDivergence
from .fields import GridSpec, ScalarField, read_field, sample_function, write_field
from .frequency import (doubling_ratios, fmt, frequency_sweep, geometric_radii, monotonicity_audit, theta_parameter,
                        theta_regime, write_csv)
from .geometry import (BETA_COLUMNS, CONTACT_COLUMNS, FAMILIES, MINKOWSKI_COLUMNS, FreeBoundarySet, SpineExtension,
                       beta, contact_order, extract_free_boundary, homogeneous_library, minkowski_content)
from .intrinsic import intrinsic_sweep, make_frame
from .solver import SolverConfig, assemble, solve_signorini

log = logging.getLogger(__name__)

EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_DIVERGENCE, EXIT_OTHER = 2, 3, 4, 1
R_MAX = 0.45

# allowed keys; a dict value is a nested block, None is a leaf
SCHEMA = {
    "name": None,
    "grid": {"dim": None, "n": None},
    "coefficients": {"preset": None, "params": None},
    "boundary": {"library": {"family": None, "m": None}, "expression": None, "params": None},
    "solve": None,
    "solver": {"omega": None, "tol": None, "max_sweeps": None, "nested": None},
    "point": None,
    "analysis": {
        "frequency": {"radii": None, "C": None},
        "intrinsic": {"radii": None, "C": None},
        "almgren": {"radii": None, "rule": None},
        "beta": {"radii": None, "centers": None, "weighting": None},
        "minkowski": {"radii": None},
        "contact_order": {"rho_min": None, "rho_max": None},
        "alpha": None,
        "theta": None,
    },
    "output": None,
}

DEFAULTS = {
    "name": "experiment",
    "grid": {"dim": 2, "n": 129},
    "coefficients": {"preset": "identity", "params": {}},
    "boundary": {"library": {"family": "two_m_minus_half", "m": 1}},
    "solve": True,
    "solver": {"omega": 1.5, "tol": 1e-10, "max_sweeps": None, "nested": True},
    "point": None,
    "analysis": {},
    "output": "out",
}


# ------------------------------------------------------------ config

def _check_keys(block, schema, path):
    if not isinstance(block, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    for key, val in block.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"{where}: unknown key")
        sub = schema[key]
        if isinstance(sub, dict) and val is not None:
            _check_keys(val, sub, where)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _check_keys(raw, SCHEMA, "")
    cfg = _merge(DEFAULTS, raw)
    if "boundary" in raw:
        cfg["boundary"] = copy.deepcopy(raw["boundary"])
    _validate(cfg)
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path} not found")
    return parse_config(p.read_text(), str(path))


def _bundled(name: str) -> Path:
    return Path(__file__).with_name("configs") / f"{name}.json"


def _radii(sel, h: float, where: str) -> np.ndarray:
    if sel is None:
        raise ConfigError(f"{where}: radii missing")
    if isinstance(sel, dict):
        extra = set(sel) - {"min", "max", "ratio"}
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown key")
        try:
            r = geometric_radii(float(sel["min"]), float(sel["max"]), float(sel.get("ratio", 2 ** 0.25)))
        except KeyError as exc:
            raise ConfigError(f"{where}.{exc.args[0]}: missing") from None
    elif isinstance(sel, list) and sel and all(isinstance(v, (int, float)) for v in sel):
        r = np.sort(np.asarray(sel, dtype=np.float64))
    else:
        raise ConfigError(f"{where}: expected a list of numbers or a min/max/ratio object")
    if r[0] < 8 * h * (1 - 1e-12) or r[-1] > R_MAX + 1e-12:
        raise ConfigError(f"{where}: radii must lie in [8h, {R_MAX}] = [{8 * h:.6g}, {R_MAX}]")
    return r


def _validate(cfg: dict):
    g = cfg["grid"]
    if g.get("dim") not in (2, 3):
        raise ConfigError("grid.dim: must be 2 or 3")
    n = g.get("n")
    if not isinstance(n, int) or n < 9 or n % 2 == 0:
        raise ConfigError("grid.n: must be an odd integer >= 9")
    c = cfg["coefficients"]
    if c.get("preset") not in PRESETS:
        raise ConfigError(f"coefficients.preset: unknown preset {c.get('preset')!r}")
    if not isinstance(c.get("params", {}), dict):
        raise ConfigError("coefficients.params: expected an object")
    b = cfg["boundary"]
    if ("library" in b) == ("expression" in b):
        raise ConfigError("boundary: give exactly one of library, expression")
    if "library" in b:
        lib = b["library"]
        if lib.get("family") not in FAMILIES:
            raise ConfigError(f"boundary.library.family: expected one of {FAMILIES}")
        if not isinstance(lib.get("m"), int) or lib["m"] < 1:
            raise ConfigError("boundary.library.m: positive integer required")
    elif b["expression"] not in EXPRESSIONS:
        raise ConfigError(f"boundary.expression: unknown expression {b['expression']!r}")
    h = 2.0 / (n - 1)
    s = cfg["solver"]
    if not (s.get("omega") == "auto" or isinstance(s.get("omega"), (int, float))):
        raise ConfigError("solver.omega: number or 'auto'")
    pt = cfg.get("point")
    if pt is not None and pt != "gamma" and (not isinstance(pt, list) or len(pt) != g["dim"]):
        raise ConfigError(f"point: expected {g['dim']} coordinates or \"gamma\"")
    an = cfg["analysis"]
    for key in ("frequency", "intrinsic", "almgren", "beta", "minkowski"):
        if key in an:
            an[key]["_radii"] = _radii(an[key].get("radii"), h, f"analysis.{key}.radii").tolist()
    if "almgren" in an and an["almgren"].get("rule", "polar") not in ("polar", "center"):
        raise ConfigError("analysis.almgren.rule: 'polar' or 'center'")
    if "contact_order" in an:
        co = an["contact_order"]
        if not (isinstance(co.get("rho_min"), (int, float)) and isinstance(co.get("rho_max"), (int, float))):
            raise ConfigError("analysis.contact_order: rho_min and rho_max required")
    mf = _coefficients(cfg)
    alpha = an.get("alpha")
    if alpha is not None and abs(float(alpha) - mf.alpha) > 1e-12:
        raise ConfigError(f"analysis.alpha: {alpha} inconsistent with the preset exponent {mf.alpha:g}")
    theta = an.get("theta")
    if theta is not None and not (isinstance(theta, (int, float)) and 0 < theta <= 1):
        raise ConfigError("analysis.theta: expected a number in (0, 1]")
    if "almgren" in an and pt != "gamma" and not mf.is_identity_at(_point(cfg), 1e-12):
        raise ConfigError("analysis.almgren: the coefficient field must be the identity at the analysis point")


# --------------------------------------------------------- data builders

def _w32_quadratic(x, params, rng):
    base = homogeneous_library(2, "two_m_minus_half", 1)
    a = params.get("a", 0.3)
    b = params.get("b", -0.2)
    c = params.get("c", 0.2)
    return base.value(x[..., [0, -1]]) + a * (x[..., 0] ** 2 - x[..., -1] ** 2) + b * x[..., 0] + c


def _random_harmonic(x, params, rng):
    """w_{3/2} plus a seeded perturbation, shifted to keep the plane data nonnegative.

    Re (x_1 + i|x_d|)^k is even, harmonic off the plane and has no normal
    derivative on it.
    """
    base = homogeneous_library(2, "two_m_minus_half", 1)
    eps = params.get("eps", 0.05)
    coef = rng.normal(size=3)
    z = x[..., 0] + 1j * np.abs(x[..., -1])
    pert = sum(coef[k - 1] * np.real(z ** k) for k in range(1, 4))
    shift = sum(abs(coef[k - 1]) * 2 ** (k / 2) for k in range(1, 4))
    return base.value(x[..., [0, -1]]) + eps * (pert + shift)


EXPRESSIONS = {"w32_quadratic": _w32_quadratic, "random_harmonic": _random_harmonic}


def _coefficients(cfg):
    c = cfg["coefficients"]
    try:
        return make_preset(c["preset"], cfg["grid"]["dim"], **c.get("params", {}))
    except TypeError as exc:
        raise ConfigError(f"coefficients.params: {exc}") from None


def _point(cfg, fb: FreeBoundarySet | None = None):
    """Analysis point; "gamma" picks the free boundary node nearest the origin."""
    pt = cfg.get("point")
    if pt is None:
        return np.zeros(cfg["grid"]["dim"])
    if pt == "gamma":
        if fb is None or len(fb) == 0:
            raise ConfigError("point: \"gamma\" requested but the free boundary is empty")
        return fb.points[int(np.argmin(np.linalg.norm(fb.points, axis=1)))].copy()
    return np.asarray(pt, dtype=np.float64)


def boundary_field(cfg, grid: GridSpec, seed: int = 0) -> ScalarField:
    b = cfg["boundary"]
    if "library" in b:
        w = homogeneous_library(2, b["library"]["family"], b["library"]["m"])
        f = w.value if grid.dim == 2 else SpineExtension(w).value
        name = f"{w.family}_{w.m}"
    else:
        rng = np.random.default_rng(seed)
        params = b.get("params", {}) or {}
        expr = EXPRESSIONS[b["expression"]]
        f = lambda x: expr(x, params, rng)  # noqa: E731
        name = b["expression"]
    return sample_function(grid, f, even=True, name=name)


# ---------------------------------------------------------------- outputs

def _fmt_value(v):
    if isinstance(v, str):
        return v
    return fmt(v)


def _write_summary(path, items):
    with open(path, "w", newline="") as fh:
        fh.write("key,value\n")
        for k, v in items:
            fh.write(f"{k},{_fmt_value(v)}\n")


def _gamma_csv(path, fb: FreeBoundarySet):
    d = fb.points.shape[1] if fb.points.size else 2
    write_csv(path, [f"x{k + 1}" for k in range(d)], fb.points.tolist())


def read_gamma(path) -> FreeBoundarySet:
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty free boundary file")
    header = lines[0].split(",")
    spacing = 0.0
    rows = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            continue
        rows.append([float(v) for v in ln.split(",")])
    pts = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    return FreeBoundarySet.from_points(pts, spacing, source=str(path))


# ---------------------------------------------------------------- pipeline

def run_pipeline(cfg: dict, out_dir, seed: int = 0, echo=print) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dim, n = cfg["grid"]["dim"], cfg["grid"]["n"]
    grid = GridSpec.uniform(dim, n)
    mf = _coefficients(cfg)
    hyp = require_hypotheses(mf, grid)
    summary = [("name", cfg["name"]), ("dim", dim), ("n", n), ("preset", cfg["coefficients"]["preset"]),
               ("alpha", mf.alpha), ("min_eig", hyp.min_eig), ("max_eig", hyp.max_eig)]
    g = boundary_field(cfg, grid, seed)
    if cfg["solve"]:
        s = cfg["solver"]
        sc = SolverConfig(omega=s.get("omega", 1.5), tol=s.get("tol", 1e-10), max_sweeps=s.get("max_sweeps"),
                          nested=s.get("nested", True))
        u, rep = solve_signorini(assemble(mf, grid), g, sc)
        items = rep.as_items()
        _write_summary(out / "solve_report.csv", items)
        summary += [(f"solve.{k}", v) for k, v in items]
    else:
        u = g
    write_field(u, out / "solution.sgnf")
    fb = extract_free_boundary(u)
    _gamma_csv(out / "gamma.csv", fb)
    summary.append(("gamma.count", len(fb)))
    x0 = _point(cfg, fb)
    summary += [(f"point.x{k + 1}", float(v)) for k, v in enumerate(x0)]
    an = cfg["analysis"]
    if "frequency" in an:
        sw = frequency_sweep(u, x0, an["frequency"]["_radii"], mf)
        sw.to_csv(out / "freq.csv")
        fit = monotonicity_audit(sw, min_radii=min(8, len(sw.radii)))
        theta = an.get("theta", theta_parameter(mf.holder, mf.alpha))
        in_regime = theta_regime(sw.radii, theta)
        if not in_regime:
            log.warning("frequency radii span beyond (theta r/16, r) with theta = %.3g; gap estimates unguaranteed",
                        theta)
        # the max over the sweep only bounds sup_r I from below
        summary += [("freq.theta", theta), ("freq.theta_regime", int(in_regime)),
                    ("freq.I_min", float(sw.I.min())), ("freq.I_max", float(sw.I.max())),
                    ("freq.C_exp", fit.C_exp), ("freq.C_add", fit.C_add),
                    ("freq.cs_margin_min", float(sw.cauchy_schwarz_margin().min()))]
    if "intrinsic" in an:
        frame = make_frame(mf, x0)
        isw = intrinsic_sweep(u, frame, an["intrinsic"]["_radii"], mf.alpha, float(an["intrinsic"].get("C", 0.0)))
        isw.to_csv(out / "intrinsic.csv")
        summary += [("intrinsic.N_min", float(isw.N.min())), ("intrinsic.N_max", float(isw.N.max()))]
    if "almgren" in an:
        asw = almgren_sweep(u, mf, x0, an["almgren"]["_radii"], an["almgren"].get("rule", "polar"))
        asw.to_csv(out / "almgren.csv")
        C = ico_audit(asw, min_radii=min(8, len(asw.radii)))
        bexp = lemma_exponent(asw, C)
        summary += [("almgren.I0_min", float(asw.I.min())), ("almgren.I0_max", float(asw.I.max())),
                    ("almgren.C_ico", C), ("almgren.C_H", fitted_H_constant(asw)),
                    ("almgren.beta", bexp), ("almgren.power_violations", hco_power_audit(asw, beta=bexp))]
    if "beta" in an:
        b = an["beta"]
        centers = _beta_centers(b.get("centers", "gamma"), fb, x0)
        w0 = fb.spacing ** (grid.n - 1) if b.get("weighting", "hausdorff") == "hausdorff" else 1.0
        rows = []
        for c in centers:
            for r in b["_radii"]:
                rows.append(beta(fb.points, c, r, np.full(len(fb), w0)).csv_row())
        write_csv(out / "beta.csv", BETA_COLUMNS, rows)
        summary.append(("beta.max", max((row[4] for row in rows), default=0.0)))
    if "minkowski" in an:
        K = np.array([[-0.5] * dim, [0.5] * dim])
        rows = [[r, *minkowski_content(fb, K, r)] for r in an["minkowski"]["_radii"]]
        write_csv(out / "minkowski.csv", MINKOWSKI_COLUMNS, rows)
        summary.append(("minkowski.ratio_max", max((row[2] for row in rows), default=0.0)))
    if "contact_order" in an:
        co_cfg = an["contact_order"]
        co = contact_order(u, x0, float(co_cfg["rho_min"]), float(co_cfg["rho_max"]))
        write_csv(out / "contact_order.csv", CONTACT_COLUMNS, co.rows())
        summary += [("contact.slope", co.slope), ("contact.kappa_low", co.kappa_low),
                    ("contact.kappa_high", co.kappa_high), ("contact.theta_H", co.theta_H)]
    _write_summary(out / "summary.csv", summary)
    for k, v in summary:
        echo(f"{k} = {_fmt_value(v)}")
    return summary


def _beta_centers(sel, fb, x0):
    if sel == "gamma":
        if len(fb) == 0:
            return []
        # the free boundary node nearest to the analysis point
        k = int(np.argmin(np.linalg.norm(fb.points - x0, axis=1)))
        return [fb.points[k]]
    if sel == "point":
        return [x0]
    return [np.asarray(c, dtype=np.float64) for c in sel]


# ------------------------------------------------------------- subcommands

def _parse_point(text, dim):
    if text is None:
        return np.zeros(dim)
    vals = [float(v) for v in text.split(",")]
    if len(vals) != dim:
        raise ConfigError(f"--point: expected {dim} coordinates")
    return np.array(vals)


def _parse_radii(args, h):
    if args.radii:
        sel = [float(v) for v in args.radii.split(",")]
    else:
        sel = {"min": args.r_min, "max": args.r_max, "ratio": args.ratio}
    return _radii(sel, h, "--radii")


def _field_and_coeff(args):
    u = read_field(args.field)
    try:
        mf = make_preset(args.preset, u.grid.dim, **json.loads(args.params))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"--preset/--params: {exc}") from None
    return u, mf


def cmd_run(args):
    if not args.config:
        raise ConfigError("run needs --config")
    path = args.config if Path(args.config).exists() else _bundled(args.config)
    cfg = load_config(path)
    run_pipeline(cfg, args.out_dir or cfg["output"], args.seed)


def cmd_solve(args):
    if not args.config:
        raise ConfigError("solve needs --config")
    path = args.config if Path(args.config).exists() else _bundled(args.config)
    cfg = load_config(path)
    cfg["analysis"] = {}
    run_pipeline(cfg, args.out_dir or cfg["output"], args.seed)


def cmd_freq(args):
    u, mf = _field_and_coeff(args)
    sw = frequency_sweep(u, _parse_point(args.point, u.grid.dim), _parse_radii(args, u.grid.h), mf)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    sw.to_csv(out / "freq.csv")
    print(f"I in [{fmt(sw.I.min())}, {fmt(sw.I.max())}] over {len(sw.radii)} radii")


def cmd_intrinsic(args):
    u, mf = _field_and_coeff(args)
    x0 = _parse_point(args.point, u.grid.dim)
    isw = intrinsic_sweep(u, make_frame(mf, x0), _parse_radii(args, u.grid.h), mf.alpha, args.C)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    isw.to_csv(out / "intrinsic.csv")
    print(f"N in [{fmt(isw.N.min())}, {fmt(isw.N.max())}]")


def cmd_almgren(args):
    u, mf = _field_and_coeff(args)
    x0 = _parse_point(args.point, u.grid.dim)
    asw = almgren_sweep(u, mf, x0, _parse_radii(args, u.grid.h), args.rule)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    asw.to_csv(out / "almgren.csv")
    print(f"I0 in [{fmt(asw.I.min())}, {fmt(asw.I.max())}]")


def _gamma_from_args(args):
    if args.gamma:
        fb = read_gamma(args.gamma)
        if args.spacing:
            fb.spacing = args.spacing
        return fb, None
    if args.field:
        u = read_field(args.field)
        return extract_free_boundary(u), u
    raise ConfigError("need --gamma or --field")


def cmd_beta(args):
    fb, _ = _gamma_from_args(args)
    if len(fb) == 0:
        raise ConfigError("empty free boundary")
    d = fb.points.shape[1]
    centers = [_parse_point(args.point, d)] if args.point else [fb.points[0]]
    radii = [float(v) for v in args.radii.split(",")] if args.radii else [args.r_max]
    rows = [beta(fb.points, c, r).csv_row() for c in centers for r in radii]
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "beta.csv", BETA_COLUMNS, rows)
    for row in rows:
        print(f"r = {fmt(row[3])}  beta = {fmt(row[4])}")


def cmd_minkowski(args):
    fb, u = _gamma_from_args(args)
    if not fb.spacing:
        raise ConfigError("--spacing is required with --gamma")
    d = fb.points.shape[1] if fb.points.size else 2
    K = np.array([[-args.box] * d, [args.box] * d])
    radii = [float(v) for v in args.radii.split(",")] if args.radii else [args.r_max]
    rows = [[r, *minkowski_content(fb, K, r)] for r in radii]
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "minkowski.csv", MINKOWSKI_COLUMNS, rows)
    for row in rows:
        print(f"r = {fmt(row[0])}  volume/r^2 = {fmt(row[2])}")


def cmd_contact(args):
    u = read_field(args.field)
    co = contact_order(u, _parse_point(args.point, u.grid.dim), args.r_min, args.r_max)
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "contact_order.csv", CONTACT_COLUMNS, co.rows())
    print(f"slope = {fmt(co.slope)}  kappa in [{fmt(co.kappa_low)}, {fmt(co.kappa_high)}]")


def cmd_audit(args):
    u, mf = _field_and_coeff(args)
    x0 = _parse_point(args.point, u.grid.dim)
    radii = _parse_radii(args, u.grid.h)
    sw = frequency_sweep(u, x0, radii, mf)
    fit = monotonicity_audit(sw, min_radii=min(8, len(radii)))
    dbl = doubling_ratios(sw)
    rows = [("I_min", float(sw.I.min())), ("I_max", float(sw.I.max())), ("C_exp", fit.C_exp), ("C_add", fit.C_add),
            ("Hp_resid_max", float(np.nanmax(np.abs(sw.Hp_resid)))),
            ("Dp_resid_max", float(np.nanmax(np.abs(sw.Dp_resid)))),
            ("cs_margin_min", float(sw.cauchy_schwarz_margin().min()))]
    if dbl.H_ratio.size:
        rows += [("H_doubling_min", float(dbl.H_ratio.min())), ("H_doubling_max", float(dbl.H_ratio.max())),
                 ("D_doubling_min", float(dbl.D_ratio.min()))]
    if mf.is_identity_at(x0, 1e-12) and radii[-1] + np.max(np.abs(x0)) <= 1.0:
        asw = almgren_sweep(u, mf, x0, radii[radii >= 8 * u.grid.h])
        if len(asw.radii) >= 2:
            C = ico_audit(asw, min_radii=2)
            rows += [("C_ico", C), ("Hr_resid_max", float(np.abs(asw.Hr_resid).max())),
                     ("power_violations", hco_power_audit(asw, beta=lemma_exponent(asw, C)))]
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    sw.to_csv(out / "freq.csv")
    _write_summary(out / "audit.csv", rows)
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {_fmt_value(v)}")


def cmd_library(args):
    w = homogeneous_library(2, args.family, args.m)
    grid = GridSpec.uniform(args.dim, args.n)
    f = w.value if args.dim == 2 else SpineExtension(w).value
    u = sample_function(grid, f, even=True, name=f"{w.family}_{w.m}")
    out = Path(args.out or f"{w.family}_{w.m}.sgnf")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(u, out)
    print(f"wrote {out} (lambda = {fmt(w.lam)})")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON) or the name of a bundled config")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized boundary presets only")

    field_args = argparse.ArgumentParser(add_help=False)
    field_args.add_argument("--field", help="SGNF1 field file")
    field_args.add_argument("--point", help="comma-separated coordinates (default: origin)")
    field_args.add_argument("--preset", default="identity", help="coefficient preset")
    field_args.add_argument("--params", default="{}", help="preset parameters as JSON")

    radii_args = argparse.ArgumentParser(add_help=False)
    radii_args.add_argument("--radii", help="comma-separated radii")
    radii_args.add_argument("--r-min", type=float, default=0.1)
    radii_args.add_argument("--r-max", type=float, default=0.45)
    radii_args.add_argument("--ratio", type=float, default=2 ** 0.25)

    p = argparse.ArgumentParser(prog="signorini-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="full config-driven pipeline").set_defaults(func=cmd_run)
    sub.add_parser("solve", parents=[common], help="solve and extract the free boundary").set_defaults(func=cmd_solve)
    sub.add_parser("freq", parents=[common, field_args, radii_args], help="frequency sweep").set_defaults(func=cmd_freq)
    sp = sub.add_parser("intrinsic", parents=[common, field_args, radii_args], help="intrinsic frequency sweep")
    sp.add_argument("--C", type=float, default=0.0)
    sp.set_defaults(func=cmd_intrinsic)
    sp = sub.add_parser("almgren", parents=[common, field_args, radii_args], help="sharp-ball Almgren sweep")
    sp.add_argument("--rule", choices=("polar", "center"), default="polar")
    sp.set_defaults(func=cmd_almgren)
    for name, func, hlp in (("beta", cmd_beta, "beta numbers of a free boundary"),
                            ("minkowski", cmd_minkowski, "Minkowski content of a free boundary")):
        sp = sub.add_parser(name, parents=[common, field_args, radii_args], help=hlp)
        sp.add_argument("--gamma", help="free boundary CSV (one point per row)")
        sp.add_argument("--spacing", type=float, default=0.0, help="grid spacing behind a --gamma file")
        if name == "minkowski":
            sp.add_argument("--box", type=float, default=0.5, help="half-width of the centered box K")
        sp.set_defaults(func=func)
    sub.add_parser("contact-order", parents=[common, field_args, radii_args],
                   help="order of contact from annular means").set_defaults(func=cmd_contact)
    sub.add_parser("audit", parents=[common, field_args, radii_args],
                   help="monotonicity, doubling and identity audits").set_defaults(func=cmd_audit)
    sp = sub.add_parser("library", parents=[common], help="sample a homogeneous solution to a field file")
    sp.add_argument("--family", choices=FAMILIES, required=True)
    sp.add_argument("--m", type=int, default=1)
    sp.add_argument("--dim", type=int, choices=(2, 3), default=2)
    sp.add_argument("--n", type=int, default=129)
    sp.add_argument("--out", help="output file")
    sp.set_defaults(func=cmd_library)
    return p


def _set_threads(k):
    if k is None:
        return
    import numba
    numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except SolverDivergence as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (SignoriniLabError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER
    return 0


if __name__ == "__main__":
    sys.exit(main())
