"""Command-line entry point: ``adaptsurv <command> ...``.

Commands: design, bound, cutoff-table, power-curves, simulate, analyze.
Every command writes its CSV plus a sibling ``manifest.txt`` into ``--out``.
Exit codes: 0 ok, 2 parse/validation, 3 numerical failure, 4 insufficient events.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import sim_engine as se
from .analysis import analyze_dataset, analyze_snapshots
from .combo_test import Weights
from .numerics import NonFinite, NoSignChange
from .surv_core import DatasetError, InsufficientEvents, read_dataset
from .wiener_bound import (DEFAULT_KNOTS, PowerInputs, corrected_kstar, kstar_table,
                           power_A, power_B, power_C, power_D, worst_case_alpha)


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


SCHEMA = {
    "accrual": {"rate", "months"},
    "followup": {"months"},
    "control": {"model", "lambda", "base", "slope", "limit"},
    "experimental": {"model", "lambda", "base", "slope", "limit"},
    "design": {"alpha", "beta", "theta_R", "d12", "weight_rule", "jenkins_d1", "jenkins_d2"},
    "interim": {"at_events", "at_month"},
    "rule": {"kind", "d12_star"},
}
REQUIRED_SECTIONS = ("accrual", "followup", "control", "experimental", "design", "interim")


# --- scenario files -------------------------------------------------------------

def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return no
        elif current == section and key is not None and line.split("=", 1)[0].strip() == key:
            return no
    return None


def _where(path, text, section, key=None) -> str:
    no = _line_of(text, section, key)
    return f"{path}:{no}" if no else str(path)


def _read_ini(text: str, path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep theta_R as written
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ParseError(" ".join(str(exc).split())) from None
    return cp


def _num(cp, path, text, section, key, kind=float):
    raw = cp[section][key]
    try:
        val = kind(raw)
    except ValueError:
        raise ParseError(f"{_where(path, text, section, key)}: [{section}] {key}={raw!r} is not a number") from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ValidationError(f"[{section}] {key} must be finite")
    return val


def _hazard(cp, path, text, section) -> se.HazardModel:
    sec = cp[section]
    model = sec.get("model", "").strip().lower()
    keys = set(sec) - {"model"}
    if model == "exponential":
        if keys != {"lambda"}:
            raise ValidationError(f"[{section}] exponential model takes exactly 'lambda'")
        lam = _num(cp, path, text, section, "lambda")
        if lam <= 0:
            raise ValidationError(f"[{section}] lambda must be positive")
        return se.Exponential(lam)
    if model == "diverging":
        if keys != {"base", "slope", "limit"}:
            raise ValidationError(f"[{section}] diverging model takes 'base', 'slope', 'limit'")
        try:
            return se.DivergingControl(*(_num(cp, path, text, section, k) for k in ("base", "slope", "limit")))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ValidationError(f"[{section}] {exc}") from None
    raise ValidationError(f"[{section}] model must be 'exponential' or 'diverging', got {model!r}")


def scenario_from_text(text: str, path="<scenario>") -> se.ScenarioConfig:
    cp = _read_ini(text, path)
    for section in cp.sections():
        if section not in SCHEMA:
            raise ParseError(f"{_where(path, text, section)}: unknown section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ParseError(f"{_where(path, text, section, key)}: unknown key {key!r} in [{section}]")
    for section in REQUIRED_SECTIONS:
        if not cp.has_section(section):
            raise ParseError(f"{path}: missing section [{section}]")

    def need(section, key, kind=float):
        if key not in cp[section]:
            raise ValidationError(f"[{section}] {key} is required")
        return _num(cp, path, text, section, key, kind)

    rate, months = need("accrual", "rate"), need("accrual", "months")
    follow = need("followup", "months")
    if rate <= 0 or months <= 0 or follow < 0:
        raise ValidationError("[accrual] rate, months must be positive and [followup] months >= 0")

    alpha, beta, theta = need("design", "alpha"), need("design", "beta"), need("design", "theta_R")
    for name, val in (("alpha", alpha), ("beta", beta)):
        if not 0 < val < 1:
            raise ValidationError(f"[design] {name} must be in (0, 1), got {val}")
    if not theta > 0:
        raise ValidationError(f"[design] theta_R must be positive, got {theta}")
    dsec = cp["design"]
    d12 = need("design", "d12", int) if "d12" in dsec else se.required_events(alpha, beta, theta).events
    rule_w = dsec.get("weight_rule", "").strip().lower()
    if rule_w not in ("irle", "jenkins"):
        raise ValidationError("[design] weight_rule must be 'irle' or 'jenkins'")
    jd1 = need("design", "jenkins_d1", int) if "jenkins_d1" in dsec else None
    jd2 = need("design", "jenkins_d2", int) if "jenkins_d2" in dsec else None
    try:
        design = se.DesignSpec(alpha, beta, theta, d12, rule_w, jd1, jd2)
    except ValueError as exc:
        raise ValidationError(f"[design] {exc}") from None

    isec = cp["interim"]
    if ("at_events" in isec) == ("at_month" in isec):
        raise ValidationError("[interim] give exactly one of at_events, at_month")
    at_month = need("interim", "at_month") if "at_month" in isec else None
    at_events = need("interim", "at_events", int) if "at_events" in isec else None

    rule: se.AdaptiveRule = se.NoChange()
    if cp.has_section("rule"):
        kind = cp["rule"].get("kind", "no_change").strip().lower()
        if kind == "increase_events":
            rule = se.IncreaseEvents(need("rule", "d12_star", int))
        elif kind == "adversarial_max_stop":
            rule = se.AdversarialMaxStop()
        elif kind != "no_change":
            raise ValidationError(f"[rule] unknown kind {kind!r}")
        if kind != "increase_events" and "d12_star" in cp["rule"]:
            raise ValidationError("[rule] d12_star only applies to increase_events")

    try:
        return se.ScenarioConfig(_hazard(cp, path, text, "control"), _hazard(cp, path, text, "experimental"),
                                 rate, months, follow, design, at_month, at_events, rule)
    except ValueError as exc:
        if isinstance(exc, (ParseError, ValidationError)):
            raise
        raise ValidationError(str(exc)) from None


def parse_scenario(path) -> se.ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    return scenario_from_text(text, p)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _hazard_items(h: se.HazardModel) -> dict:
    if isinstance(h, se.Exponential):
        return {"model": "exponential", "lambda": _fmt(h.lam)}
    return {"model": "diverging", "base": _fmt(h.base), "slope": _fmt(h.slope), "limit": _fmt(h.limit)}


def scenario_sections(sc: se.ScenarioConfig) -> dict[str, dict[str, str]]:
    d = sc.design
    design = {"alpha": _fmt(d.alpha), "beta": _fmt(d.beta), "theta_R": _fmt(d.theta_r),
              "d12": str(d.d12), "weight_rule": d.weight_rule}
    if d.jenkins_d1 is not None:
        design["jenkins_d1"] = str(d.jenkins_d1)
    if d.jenkins_d2 is not None:
        design["jenkins_d2"] = str(d.jenkins_d2)
    interim = ({"at_month": _fmt(sc.interim_month)} if sc.interim_month is not None
               else {"at_events": str(sc.interim_events)})
    if isinstance(sc.rule, se.IncreaseEvents):
        rule = {"kind": "increase_events", "d12_star": str(sc.rule.d12_star)}
    elif isinstance(sc.rule, se.AdversarialMaxStop):
        rule = {"kind": "adversarial_max_stop"}
    else:
        rule = {"kind": "no_change"}
    return {
        "accrual": {"rate": _fmt(sc.accrual_rate), "months": _fmt(sc.accrual_months)},
        "followup": {"months": _fmt(sc.followup_months)},
        "control": _hazard_items(sc.control),
        "experimental": _hazard_items(sc.experimental),
        "design": design,
        "interim": interim,
        "rule": rule,
    }


def _ini_text(sections: dict[str, dict[str, str]]) -> str:
    lines = []
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in items.items())
        lines.append("")
    return "\n".join(lines)


def emit_scenario(sc: se.ScenarioConfig) -> str:
    return _ini_text(scenario_sections(sc))


# --- manifests ------------------------------------------------------------------------

def write_manifest(out: Path, command: str, params: dict, seed=None, scenario: se.ScenarioConfig | None = None):
    run = {"tool": "adaptsurv", "tool_version": __version__, "command": command,
           "created": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    if seed is not None:
        run["seed"] = str(seed)
    sections = {"run": run, "params": {k: str(v) for k, v in params.items()}}
    if scenario is not None:
        sections.update(scenario_sections(scenario))
    (out / "manifest.txt").write_text(_ini_text(sections))


def read_manifest(path) -> tuple[dict, dict, se.ScenarioConfig | None]:
    """(run info, params, scenario or None) from a manifest written by this tool."""
    text = Path(path).read_text()
    cp = _read_ini(text, path)
    run = dict(cp["run"]) if cp.has_section("run") else {}
    params = dict(cp["params"]) if cp.has_section("params") else {}
    rest = [s for s in cp.sections() if s not in ("run", "params")]
    scenario = None
    if rest:
        scen = {s: dict(cp[s]) for s in rest}
        scenario = scenario_from_text(_ini_text(scen), path)
    return run, params, scenario


# --- CSV helpers ------------------------------------------------------------------------

def _prob(x: float) -> str:
    return f"{x:.6g}"


def _cut(x: float) -> str:
    return f"{x:.4f}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- commands -----------------------------------------------------------------------------

def cmd_design(args, out: Path) -> None:
    if args.scenario:
        sc = parse_scenario(args.scenario)
        alpha, beta, theta = sc.design.alpha, sc.design.beta, sc.design.theta_r
    else:
        if None in (args.alpha, args.beta, args.theta_r):
            raise ValidationError("design needs --scenario or all of --alpha, --beta, --theta-r")
        sc, alpha, beta, theta = None, args.alpha, args.beta, args.theta_r
    req = se.required_events(alpha, beta, theta)
    rows = [("required_events", str(req.events)), ("required_events_exact", f"{req.exact:.4f}")]
    if sc is not None:
        pv = se.planning_values(sc)
        rows += [
            ("d12", str(sc.design.d12)),
            ("n_patients", str(sc.n_patients)),
            ("t_max", _fmt(sc.t_max)),
            ("expected_events_t_max", f"{se.expected_events(sc, sc.t_max):.4f}"),
            ("expected_interim_time", f"{se.expected_interim_time(sc):.4f}"),
            ("expected_t1", f"{pv.t1:.4f}"),
            ("expected_d1_t1", f"{pv.d1_t1:.4f}"),
            ("expected_d1_tmax", f"{pv.d1_tmax:.4f}"),
            ("planned_w1", f"{pv.w1:.6f}"),
            ("planned_u1", f"{pv.u1:.6f}"),
            ("worst_case_alpha", _prob(worst_case_alpha(pv.w1, pv.u1, alpha, args.knots))),
            ("k_star", _cut(corrected_kstar(pv.w1, pv.u1, alpha, args.knots))),
        ]
    _write_csv(out / "design.csv", ("quantity", "value"), rows)
    write_manifest(out, "design", {"alpha": alpha, "beta": beta, "theta_R": theta, "knots": args.knots},
                   scenario=sc)
    for k, v in rows:
        print(f"{k},{v}")


def cmd_bound(args, out: Path) -> None:
    value = worst_case_alpha(args.w1, args.u1, args.alpha, args.knots)
    _write_csv(out / "bound.csv", ("w1", "u1", "alpha", "knots", "worst_case_alpha"),
               [(repr(args.w1), repr(args.u1), repr(args.alpha), args.knots, _prob(value))])
    write_manifest(out, "bound", {"w1": args.w1, "u1": args.u1, "alpha": args.alpha, "knots": args.knots})
    print(_prob(value))


TABLE_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


def cmd_cutoff_table(args, out: Path) -> None:
    rows_val = list(TABLE_GRID)
    w1s = [math.sqrt(r) for r in rows_val] if args.rows == "w1_squared" else rows_val
    table = kstar_table(w1s, TABLE_GRID, args.alpha, args.knots)
    header = [args.rows] + [f"u1={u:.1f}" for u in TABLE_GRID]
    body = [[f"{r:.1f}"] + [_cut(v) for v in row] for r, row in zip(rows_val, table)]
    _write_csv(out / "table.csv", header, body)
    write_manifest(out, "cutoff-table", {"alpha": args.alpha, "knots": args.knots, "rows": args.rows})
    for line in [",".join(header)] + [",".join(r) for r in body]:
        print(line)


def _p2_grid(spec: str) -> np.ndarray:
    lo, hi, step = (float(x) for x in spec.split(":"))
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 10)


def cmd_power_curves(args, out: Path) -> None:
    if (args.w1 is None) == (args.d12 is None):
        raise ValidationError("power-curves needs exactly one of --w1, --d12 (w1 = sqrt(d1_t1/d12))")
    w1 = args.w1 if args.w1 is not None else math.sqrt(args.d1_t1 / args.d12)
    w = Weights.from_w1(w1)
    u1 = args.d1_t1 / args.d1_tmax
    k_star = args.k_star if args.k_star is not None else corrected_kstar(w1, u1, args.alpha, args.knots)
    pi = PowerInputs(w, args.d1_t1, args.d1_tmax, args.theta_r, args.alpha, k_star, args.knots)
    rows = []
    for p2 in _p2_grid(args.p2_grid):
        rows.append((f"{p2:g}", _prob(power_A(pi, p2)), _prob(power_B(pi, p2)),
                     _prob(power_C(pi, p2)), _prob(power_D(pi, p2))))
    _write_csv(out / "power.csv", ("p2", "A", "B", "C", "D"), rows)
    write_manifest(out, "power-curves", {"w1": w1, "d1_t1": args.d1_t1, "d1_tmax": args.d1_tmax,
                                         "theta_R": args.theta_r, "alpha": args.alpha,
                                         "k_star": k_star, "knots": args.knots, "p2_grid": args.p2_grid})
    print(f"k_star,{_cut(k_star)}")


def cmd_simulate(args, out: Path) -> None:
    sc = parse_scenario(args.scenario)
    k_star = args.k_star if args.k_star is not None else se.planned_kstar(sc)
    summary = se.operating_characteristics(sc, None, args.reps, args.seed, k_star, args.threads)
    rows = summary.rows()
    header = list(rows[0])
    body = []
    for r in rows:
        body.append([r["test"], _prob(r["reject_rate"]), _prob(r["se"]), r["replications"], _cut(r["k_star"])]
                    + [f"{r[k]:.4f}" for k in header[5:]])
    _write_csv(out / "summary.csv", header, body)
    write_manifest(out, "simulate", {"reps": args.reps, "k_star": k_star, "threads": args.threads},
                   seed=args.seed, scenario=sc)
    for line in [",".join(header)] + [",".join(map(str, r)) for r in body]:
        print(line)


SNAPSHOT_ARGS = ("s1", "d1", "s1_star", "d1_star", "s12_star")


def cmd_analyze(args, out: Path) -> None:
    given = [getattr(args, a) is not None for a in SNAPSHOT_ARGS]
    if args.data and any(given):
        raise ValidationError("analyze takes either --data or snapshot values, not both")
    if args.data:
        data = read_dataset(args.data)
        res = analyze_dataset(data, args.d12, args.d12_star, args.alpha, t_max=args.t_max,
                              k_star=args.k_star, knots=args.knots)
    else:
        if not all(given):
            raise ValidationError("snapshot mode needs --s1 --d1 --s1-star --d1-star --s12-star")
        u1 = args.u1
        if u1 is None and args.n1 is not None:
            u1 = args.d1 / args.n1
        res = analyze_snapshots(args.s1, args.d1, args.d12, args.s1_star, args.d1_star, args.s12_star,
                                args.d12_star, args.alpha, u1=u1, k_star=args.k_star, knots=args.knots)
    d = res.as_dict()
    rows = []
    for k, v in d.items():
        if isinstance(v, bool):
            rows.append((k, "reject" if v else "no reject"))
        elif isinstance(v, int):
            rows.append((k, str(v)))
        else:
            rows.append((k, f"{v:.6g}"))
    _write_csv(out / "decisions.csv", ("quantity", "value"), rows)
    params = {k: getattr(args, k) for k in ("data", "d12", "d12_star", "alpha", "t_max", "u1", "n1", "k_star", "knots")
              + SNAPSHOT_ARGS if getattr(args, k) is not None}
    write_manifest(out, "analyze", params)
    for k, v in rows:
        print(f"{k},{v}")


# --- argument parsing ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptsurv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory (default: cwd)")
        sp.add_argument("--knots", type=int, default=DEFAULT_KNOTS)
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("design", help="required / expected events and planning values")
    common(sp)
    sp.add_argument("--scenario")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--theta-r", type=float)
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("bound", help="worst-case type I error")
    common(sp)
    sp.add_argument("--w1", type=float, required=True)
    sp.add_argument("--u1", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.set_defaults(func=cmd_bound)

    sp = sub.add_parser("cutoff-table", help="corrected cutoffs k* on the 9x9 grid")
    common(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--rows", choices=("w1_squared", "w1"), default="w1_squared",
                    help="meaning of the row labels (default: first-stage weight squared)")
    sp.set_defaults(func=cmd_cutoff_table)

    sp = sub.add_parser("power-curves", help="conditional power A-D against p2")
    common(sp)
    sp.add_argument("--d1-t1", type=float, required=True)
    sp.add_argument("--d1-tmax", type=float, required=True)
    sp.add_argument("--d12", type=float)
    sp.add_argument("--w1", type=float)
    sp.add_argument("--theta-r", type=float, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--k-star", type=float)
    sp.add_argument("--p2-grid", default="0.01:0.99:0.01", help="lo:hi:step")
    sp.set_defaults(func=cmd_power_curves)

    sp = sub.add_parser("simulate", help="Monte Carlo operating characteristics")
    common(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--k-star", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="final decisions from a dataset or snapshot values")
    common(sp)
    sp.add_argument("--data")
    sp.add_argument("--d12", type=int, required=True)
    sp.add_argument("--d12-star", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--t-max", type=float)
    sp.add_argument("--k-star", type=float)
    sp.add_argument("--u1", type=float)
    sp.add_argument("--n1", type=int, help="first-stage patients (u1 = d1/n1)")
    for name in SNAPSHOT_ARGS:
        sp.add_argument("--" + name.replace("_", "-"), type=float if name.startswith("s") else int)
    sp.set_defaults(func=cmd_analyze)
    return p


EXIT_CODES = {"parse": 2, "validation": 2, "numerical": 3, "insufficient_events": 4}


def _category(exc: Exception) -> str:
    if isinstance(exc, InsufficientEvents):
        return "insufficient_events"
    if isinstance(exc, (ParseError, DatasetError)):
        return "parse"
    if isinstance(exc, (NoSignChange, NonFinite, ArithmeticError)):
        return "numerical"
    return "validation"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        args.func(args, out)
    except (ValueError, ArithmeticError, InsufficientEvents, OSError) as exc:
        cat = "parse" if isinstance(exc, OSError) else _category(exc)
        msg = " ".join(str(exc).split())
        print(f"error category={cat} message={msg}", file=sys.stderr)
        return EXIT_CODES[cat]
    return 0


if __name__ == "__main__":
    sys.exit(main())
