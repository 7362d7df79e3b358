"""Command-line front end.

    sheet-extremes bound    --family eq12 --h 0.5,0.5 --eps 3
    sheet-extremes optimize --family eq10 --eps 2.5,3,4
    sheet-extremes certify  --h 0.5,0.5 --paths 100000 --out tails.csv
    sheet-extremes verify   --covering-sweep
    sheet-extremes report   --domain square12 --eps 2.5,3,4,6

Exit codes: 0 success, 1 computation failure or violated bound, 2 usage.
Data goes to stdout or --out; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional

import tomli

from . import campaign as C
from .bounds import QuadratureError
from .field_model import HurstPair
from .optimizer import PARAMETRIC_FAMILIES, best_bound, optimize_p
from .series import DEFAULT_TOL, SeriesDivergenceError
from .simulator import FactorizationError

SEED_ENV = "SHEET_EXTREMES_SEED"

DEFAULTS = dict(
    h=["0.5,0.5"],
    domain="unit",
    family=None,
    eps=[2.5, 3.0, 4.0, 6.0],
    p=None,
    paths=100_000,
    seed=None,
    grid="64x64",
    schedule="exp",
    normalizer="loglog",
    phi=None,
    kappa=None,
    tol=DEFAULT_TOL,
    out=None,
    format="csv",
    workers=1,
)

COLUMNS = {
    "bound": ["schema_version", "h1", "h2", "domain", "family", "eps", "p", "value", "log_value",
              "valid", "flags", "failed_conditions", "series_terms", "series_relative_tail",
              "series_converged"],
    "optimize": ["schema_version", "h1", "h2", "domain", "eps", "family", "best_p", "value",
                 "log_value", "evaluations", "source", "selected"],
    "certify": ["schema_version", "h1", "h2", "domain", "grid", "paths", "seed", "eps", "hits",
                "p_hat", "ci99_low", "ci99_high", "family", "p", "bound_value", "bound_log_value",
                "valid", "flags", "dominated"],
    "verify": ["schema_version", "check", "h", "passed", "worst_error", "detail"],
    "covering": ["schema_version", "metric", "h", "rect", "radius", "formula_bound",
                 "packing_count", "ok"],
}
COLUMNS["report"] = COLUMNS["bound"]


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _hurst(text) -> HurstPair:
    if isinstance(text, (list, tuple)):
        return HurstPair(float(text[0]), float(text[1]))
    return HurstPair.parse(str(text))


def _grid(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        n1, n2 = text
    else:
        parts = str(text).lower().split("x")
        if len(parts) != 2:
            raise UsageError("--grid is N1xN2")
        n1, n2 = parts
    n1, n2 = int(n1), int(n2)
    if n1 < 1 or n2 < 1:
        raise UsageError("grid sizes must be positive")
    return n1, n2


def _families(val) -> Optional[list[str]]:
    if val is None:
        return None
    items = val if isinstance(val, (list, tuple)) else [val]
    out = []
    for item in items:
        out.extend(x.strip() for x in str(item).split(",") if x.strip())
    return out


def _flatten(table: dict, prefix: str = "") -> dict:
    # nested tables ([mc], [quadrant], ...) only group keys; names stay flat
    out = {}
    for k, v in table.items():
        if isinstance(v, dict):
            out.update(_flatten(v))
        else:
            out[k.replace("-", "_")] = v
    return out


_CONFIG_ALIASES = {"hurst": "h", "families": "family", "epsilon": "eps"}


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    flat = {_CONFIG_ALIASES.get(k, k): v for k, v in _flatten(raw).items()}
    unknown = set(flat) - set(DEFAULTS) - {"use_paper_eq7_exponent", "covering_sweep"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "h" in flat and not isinstance(flat["h"], list):
        flat["h"] = [flat["h"]]
    if "h" in flat and flat["h"] and isinstance(flat["h"][0], (int, float)):
        flat["h"] = [flat["h"]]
    return flat


def resolve(args: argparse.Namespace) -> dict:
    """CLI flags over config file over defaults."""
    file_cfg = load_config(args.config) if args.config else {}
    out = {"h_given": getattr(args, "h", None) is not None or "h" in file_cfg}
    for key, default in DEFAULTS.items():
        cli = getattr(args, key, None)
        if cli is not None:
            out[key] = cli
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    for flag in ("use_paper_eq7_exponent", "covering_sweep"):
        out[flag] = bool(getattr(args, flag, False) or file_cfg.get(flag, False))
    if out["seed"] is None:
        env = os.environ.get(SEED_ENV)
        try:
            out["seed"] = int(env) if env else 0
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    try:
        out["hurst"] = [_hurst(x) for x in out.pop("h")]
        out["eps"] = _float_list(out["eps"])
        out["grid"] = _grid(out["grid"])
        out["family"] = _families(out["family"])
        out["paths"] = int(out["paths"])
        out["seed"] = int(out["seed"])
        out["workers"] = int(out["workers"])
        out["tol"] = float(out["tol"])
        out["p"] = None if out["p"] is None else float(out["p"])
        out["kappa"] = None if out["kappa"] is None else float(out["kappa"])
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if out["format"] not in ("csv", "json"):
        raise UsageError("--format is csv or json")
    if out["workers"] < 1:
        raise UsageError("--workers must be positive")
    if not out["eps"] or any(b <= a for a, b in zip(out["eps"], out["eps"][1:])):
        raise UsageError("--eps must be a strictly ascending list")
    if out["p"] is not None and not 0.0 < out["p"] < 1.0:
        raise UsageError("--p must lie in (0, 1)")
    if out["kappa"] is not None and not out["kappa"] > 0:
        raise UsageError("--kappa must be positive")
    if not out["tol"] > 0:
        raise UsageError("--tol must be positive")
    fams = out["family"] or []
    if fams and any(f not in C.ALL_FAMILIES and f != "best" for f in fams):
        bad = [f for f in fams if f not in C.ALL_FAMILIES and f != "best"]
        raise UsageError(f"unknown family {bad[0]!r}; known: {', '.join(C.ALL_FAMILIES)}")
    domain_given = getattr(args, "domain", None) is not None or "domain" in file_cfg
    if not domain_given and fams and all(f in C.WEIGHT_FAMILIES or f in C.QUADRANT_FAMILIES
                                         for f in fams):
        out["domain"] = "quadrant"
    if out["domain"] == "quadrant" and out["phi"] is None and fams and \
            all(f in C.WEIGHT_FAMILIES for f in fams):
        out["phi"] = "phi1"
    if out["phi"] not in (None, "phi1", "phi2"):
        raise UsageError("--phi is phi1 or phi2")
    try:
        out["dom"] = C.parse_domain(out["domain"], schedule=out["schedule"],
                                    normalizer=out["normalizer"], phi=out["phi"])
        if out["dom"].kind == "quadrant" and not out["dom"].phi:
            out["dom"].normalizer_fn()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    allowed = set(C.default_families(out["dom"]))
    if out["dom"].compact is not None:
        allowed |= _compact_allowed(out["dom"])
    for f in fams:
        if f != "best" and f not in allowed:
            raise UsageError(f"family {f} does not apply to domain {out['dom'].label}")
    return out


def _compact_allowed(dom) -> set:
    r = dom.compact
    s = set()
    if r.is_unit:
        s |= {"eq9", "eq10", "eq12"}
    if r.at_origin and r.t1_max == r.t2_max:
        s.add("eq9")
    if r.at_origin:
        s |= {"eq11", "eq10", "eq12"}
    if r.t1_max >= 1 and r.t2_max >= 1 and r.at_origin:
        s |= {"eq15", "eq16"}
    if r.is_square12:
        s |= {"eq17", "eq18"}
    return s


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def render(kind: str, rows: list[dict], fmt: str, extra: Optional[dict] = None) -> str:
    cols = COLUMNS[kind]
    for r in rows:
        r["schema_version"] = C.SCHEMA_VERSION
    if fmt == "json":
        doc = {"schema_version": C.SCHEMA_VERSION, "command": kind,
               "columns": cols,
               "rows": [{c: _json_safe(r.get(c)) for c in cols} for r in rows]}
        for k, (ek, erows) in (extra or {}).items():
            doc[k] = [{c: _json_safe(r.get(c)) for c in COLUMNS[ek]} for r in erows]
        return json.dumps(doc, ensure_ascii=False, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


def bound_row_dict(h: HurstPair, dom_label: str, row: C.BoundRow) -> dict:
    return dict(h1=h.h1, h2=h.h2, domain=dom_label, family=row.family, eps=row.eps, p=row.p,
                value=row.value, log_value=row.log_value, valid=row.valid, flags=row.flags,
                failed_conditions=row.failed or row.note, series_terms=row.series_terms,
                series_relative_tail=row.series_tail, series_converged=row.series_converged)


# ---------------------------------------------------------------------------
# commands


def cmd_bound(cfg: dict) -> int:
    dom = cfg["dom"]
    fams = cfg["family"] or list(C.default_families(dom))
    rows = []
    for h in cfg["hurst"]:
        for eps in cfg["eps"]:
            for f in fams:
                row = C.evaluate_bound(f, h, eps, dom, p=cfg["p"], tol=cfg["tol"],
                                       kappa=cfg["kappa"])
                rows.append(bound_row_dict(h, dom.label, row))
    emit(render("bound", rows, cfg["format"]), cfg["out"])
    return 0


def cmd_optimize(cfg: dict) -> int:
    dom = cfg["dom"]
    rect = dom.compact
    if rect is None:
        raise UsageError("optimize works on compact domains")
    fams = cfg["family"] or ["best"]
    rows = []
    for h in cfg["hurst"]:
        for eps in cfg["eps"]:
            for f in fams:
                if f == "best":
                    rep = best_bound(h, rect, eps)
                    for name, value in rep.compared_families:
                        rows.append(dict(h1=h.h1, h2=h.h2, domain=dom.label, eps=eps, family=name,
                                         best_p=rep.best_p if name == rep.family else None,
                                         value=value,
                                         log_value=rep.log_value if name == rep.family else None,
                                         evaluations=rep.evaluations, source=rep.source,
                                         selected=name == rep.family))
                    continue
                if f not in PARAMETRIC_FAMILIES:
                    raise UsageError(f"{f} has no free p; parametric families are "
                                     f"{', '.join(PARAMETRIC_FAMILIES)} or 'best'")
                rep = optimize_p(f, h, rect, eps)
                rows.append(dict(h1=h.h1, h2=h.h2, domain=dom.label, eps=eps, family=f,
                                 best_p=rep.best_p, value=rep.best_value, log_value=rep.log_value,
                                 evaluations=rep.evaluations, source=rep.source, selected=True))
    emit(render("optimize", rows, cfg["format"]), cfg["out"])
    return 0


def cmd_certify(cfg: dict) -> int:
    try:
        camp = C.CampaignConfig(cfg["hurst"], cfg["dom"], cfg["eps"], cfg["family"], cfg["paths"],
                                cfg["seed"], cfg["grid"], cfg["workers"], cfg["tol"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if cfg["dom"].kind == "quadrant":
        box = C.WEIGHT_BOX if cfg["dom"].phi else C.QUADRANT_BOX
        progress(f"note: quadrant supremum truncated to [{box[0]:.6g}, {box[1]:.6g}]^2 "
                 "(log-spaced grid); the truncated sup is a lower bound for the full sup")
    rows = C.certify(camp, progress)
    out = []
    violated = 0
    for r in rows:
        b = r.bound
        dom = r.dominated
        violated += dom is False
        out.append(dict(h1=r.h.h1, h2=r.h.h2, domain=r.domain, grid=r.grid, paths=r.paths,
                        seed=r.seed, eps=r.eps, hits=r.hits, p_hat=r.p_hat, ci99_low=r.ci99_low,
                        ci99_high=r.ci99_high, family=b.family, p=b.p, bound_value=b.value,
                        bound_log_value=b.log_value, valid=b.valid, flags=b.flags, dominated=dom))
    emit(render("certify", out, cfg["format"]), cfg["out"])
    if violated:
        progress(f"VIOLATION: {violated} valid bound(s) below the 99% upper confidence limit")
        return 1
    progress("all valid bounds dominate the empirical tails")
    return 0


VERIFY_HURST = ("0.3,0.7", "0.5,0.5", "0.8,0.2")


def cmd_verify(cfg: dict) -> int:
    # anisotropic pairs by default: the exponent typo is invisible when H1 = H2
    hurst = cfg["hurst"] if cfg["h_given"] else [HurstPair.parse(x) for x in VERIFY_HURST]
    paths = min(cfg["paths"], 20_000)
    grid = tuple(min(n, 32) for n in cfg["grid"])
    checks, sweep = C.verify(hurst, paths=paths, seed=cfg["seed"], grid=grid,
                             misprinted_exponent=cfg["use_paper_eq7_exponent"],
                             covering=cfg["covering_sweep"])
    rows = [dict(check=c.check, h=c.h, passed=c.passed, worst_error=c.worst,
                 detail=c.detail) for c in checks]
    cov = [dict(metric=s["metric"], h=s["h"], rect=s["rect"], radius=s["radius"],
                formula_bound=s["formula"], packing_count=s["packing"], ok=s["ok"]) for s in sweep]
    for c in checks:
        progress(f"{'PASS' if c.passed else 'FAIL'} {c.check} [{c.h}] worst={c.worst:.3g}")
    if cfg["covering_sweep"] and cfg["format"] == "csv":
        # the covering table is the data product; the checks were echoed above
        emit(render("covering", cov, "csv"), cfg["out"])
    else:
        extra = {"covering": ("covering", cov)} if cfg["covering_sweep"] else None
        for r in cov:
            r["schema_version"] = C.SCHEMA_VERSION
        emit(render("verify", rows, cfg["format"], extra), cfg["out"])
    return 0 if all(c.passed for c in checks) else 1


def cmd_report(cfg: dict) -> int:
    dom = cfg["dom"]
    fams = [f for f in (cfg["family"] or []) if f != "best"] or None
    rows = []
    for h in cfg["hurst"]:
        for row in C.report([h], dom, cfg["eps"], fams, cfg["tol"]):
            row.note = ""
            rows.append(bound_row_dict(h, dom.label, row))
    emit(render("report", rows, cfg["format"]), cfg["out"])
    return 0


COMMANDS = {"bound": cmd_bound, "optimize": cmd_optimize, "certify": cmd_certify,
            "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with default settings")
    common.add_argument("--h", action="append", metavar="H1,H2",
                        help="Hurst pair; repeat for several")
    common.add_argument("--domain", help="unit | rect:T1,T2 | square12 | quadrant")
    common.add_argument("--family", action="append", help="family id; repeat or comma-separate")
    common.add_argument("--eps", help="comma-separated ascending list")
    common.add_argument("--p", type=float, help="fixed p for parametric families")
    common.add_argument("--paths", type=int)
    common.add_argument("--seed", type=int, help=f"default from ${SEED_ENV}, else 0")
    common.add_argument("--grid", help="N1xN2")
    common.add_argument("--schedule", help="exp | geometric:r")
    common.add_argument("--normalizer", help="loglog")
    common.add_argument("--phi", help="phi1 | phi2")
    common.add_argument("--kappa", type=float,
                        help="reference level for eq21-proofform (default phi(1,1))")
    common.add_argument("--tol", type=float, help="relative series tail tolerance")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="sheet-extremes", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("--use-paper-eq7-exponent", action="store_true",
                            help="use the printed exponent in the second-coordinate identity")
            sp.add_argument("--covering-sweep", action="store_true",
                            help="also compare covering formulas with packing counts")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SeriesDivergenceError, QuadratureError, FactorizationError, ArithmeticError,
            RuntimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
