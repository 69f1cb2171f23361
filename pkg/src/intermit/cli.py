"""Command-line driver: ``intermit {analyze,simulate,compare,sweep}``.

Exit status is 0 on success, 1 when only diagnostics failed (``--strict``
with warnings present, or ``compare`` tolerances exceeded) and 2 on errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import ir
from .errors import EtirSyntaxError, IntermitError
from .estimator import IntermittentTimingAnalyzer
from .intermittent import load_energy_config
from .report import (
    _slug,
    _write_atomic,
    dumps,
    emit_outputs,
    to_dot,
    write_sweep,
)
from .simulate import SimConfig, compare, simulate_many, summary_json, write_samples_csv
from .validation import check_cost_model, check_energy_config

# tolerances of the compare command: (mean, std, ks)
CONTINUOUS_TOL = (0.005, 0.005, 0.02)
INTERMITTENT_TOL = (0.02, 0.10, 0.05)


class _Reporter:
    def __init__(self, json_mode: bool, stream=None):
        self.json_mode = json_mode
        self.stream = stream or sys.stderr

    def emit(self, severity, message, kind="", file=None, line=None, col=None):
        if self.json_mode:
            rec = {"severity": severity, "kind": kind, "message": message}
            if file is not None:
                rec["file"] = str(file)
            if line is not None:
                rec.update(line=line, col=col)
            print(json.dumps(rec, sort_keys=True), file=self.stream)
            return
        where = ""
        if file is not None:
            where = f"{file}:"
            if line is not None:
                where += f"{line}:{col}:"
            where += " "
        label = f"{kind}: " if kind else ""
        print(f"{where}{severity}: {label}{message}", file=self.stream)

    def error(self, exc: BaseException, file=None):
        if isinstance(exc, EtirSyntaxError):
            self.emit("error", exc.message, type(exc).__name__, file, exc.line, exc.col)
        else:
            self.emit("error", str(exc), type(exc).__name__, file)

    def warning(self, message, kind=""):
        self.emit("warning", message, kind)


def _energy_arg(args, model):
    if args.energy:
        return load_energy_config(args.energy, model)
    if args.capacitance is not None:
        if args.v_on is None or args.tau_harvest is None:
            raise IntermitError("--capacitance needs --v-on and --tau-harvest")
        obj = {"capacitance_f": args.capacitance, "v_on": args.v_on, "v_off": args.v_off,
               "tau_harvest": _dist_json(args.tau_harvest)}
        return check_energy_config(obj, model)
    return None


def _dist_json(text):
    from . import dist as D
    return D.to_json(ir.parse_dist_spec(text))


def _analyzer(args, energy, function=None):
    model = check_cost_model(args.cost_model)
    return IntermittentTimingAnalyzer(
        cost_model=model,
        energy=_energy_arg(args, model) if energy is None else energy,
        function=function or args.function,
        max_loop=args.max_loop,
        prob_floor=args.prob_floor,
        grid_len=args.grid_len,
        consolidate=args.consolidate,
        split_outliers=not args.no_split,
        threshold=args.threshold,
    )


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("ETAP_OUT_DIR") or "out")


def _read_program(path):
    return ir.parse_program(Path(path).read_text(encoding="utf-8"))


def cmd_analyze(args, rep: _Reporter) -> int:
    prog = _read_program(args.program)
    est = _analyzer(args, None).fit(prog)
    for w, kind in zip(est.warnings_, est.warning_kinds_):
        rep.warning(w, kind)
    result = est.result()
    out = _out_dir(args)
    emit_outputs([result], out, gnuplot=args.gnuplot)
    if args.dot:
        _write_atomic(out / f"{_slug(result.name)}.dot",
                      to_dot(est.program_.function(est.function_), est.paths_.target))
    for r in result.requirements:
        mark = "meets" if r.meets else "misses"
        print(f"{est.function_}: P(bound {r.requirement.bound_s:g} s) = {r.probability:.6g} "
              f"({mark} {r.threshold:g})")
    print(f"{est.function_}: mean {result.timing.mean() / 1e3:.6g} ms, "
          f"std {result.timing.std() / 1e3:.6g} ms -> {out}")
    return 1 if args.strict and est.warnings_ else 0


def cmd_simulate(args, rep: _Reporter) -> int:
    prog = ir.normalize_checkpoints(_read_program(args.program))
    model = check_cost_model(args.cost_model)
    cfg = _energy_arg(args, model)
    e = simulate_many(prog, model, cfg, SimConfig(runs=args.runs, seed=args.seed), args.function)
    out = _out_dir(args)
    write_samples_csv(e, out / "samples.csv")
    _write_atomic(out / "simulation.json", dumps(summary_json(e)))
    if e.abandoned_runs:
        rep.warning(f"{e.nonterminating_runs} runs did not terminate, "
                    f"{e.step_limited_runs} hit the step limit", "NonTerminated")
    if e.samples.size:
        print(f"{e.samples.size} runs: mean {e.mean() / 1e3:.6g} ms, std {e.std() / 1e3:.6g} ms -> {out}")
    return 1 if args.strict and e.abandoned_runs else 0


def cmd_compare(args, rep: _Reporter) -> int:
    if args.runs < 2:
        rep.warning(f"only {args.runs} simulated run(s); the comparison has no statistical power",
                    "LowSampleSize")
    prog = _read_program(args.program)
    est = _analyzer(args, None).fit(prog)
    sim = SimConfig(runs=args.runs, seed=args.seed)
    e = simulate_many(est.program_, est.cost_model_, est.energy_config_, sim, est.function_)
    if e.samples.size == 0:
        rep.warning("no simulated run completed", "NonTerminated")
        return 1
    metrics = compare(e, est.timing_)
    base = CONTINUOUS_TOL if est.energy_config_ is None else INTERMITTENT_TOL
    tol = (args.mean_tol if args.mean_tol is not None else base[0],
           args.std_tol if args.std_tol is not None else base[1],
           args.ks_tol if args.ks_tol is not None else base[2])
    checks = {
        "mean_rel_error": (metrics["mean_rel_error"], tol[0]),
        "std_rel_error": (metrics["std_rel_error"], tol[1]),
        "ks_statistic": (metrics["ks_statistic"], tol[2]),
    }
    ok = True
    for k, (v, t) in checks.items():
        # a single run has no spread to compare against
        if k == "std_rel_error" and e.samples.size < 2:
            continue
        good = v <= t
        ok &= good
        print(f"{k} = {v:.6g} (tolerance {t:g}) {'ok' if good else 'EXCEEDED'}")
    if args.out or os.environ.get("ETAP_OUT_DIR"):
        out = _out_dir(args)
        _write_atomic(out / "compare.json", dumps({"metrics": metrics, "tolerances": tol, "ok": ok,
                                                   "simulation": summary_json(e)}))
    return 0 if ok else 1


def _load_sweep(path):
    spec_path = Path(path)
    spec = json.loads(spec_path.read_text(encoding="utf-8"))
    base = spec_path.parent
    programs = []
    for p in spec.get("programs", []):
        if isinstance(p, str):
            p = {"path": p}
        fp = Path(p["path"])
        fp = fp if fp.is_absolute() else base / fp
        programs.append((p.get("name") or fp.stem, fp))
    caps = []
    tau = spec.get("tau_harvest")
    for i, c in enumerate(spec.get("capacitors", [])):
        c = dict(c)
        name = str(c.pop("name", f"cap{i}"))
        if "tau_harvest" not in c and tau is not None:
            c["tau_harvest"] = tau
        caps.append((name, c))
    if not programs or not caps:
        raise IntermitError("sweep spec needs at least one program and one capacitor")
    return spec, programs, caps


def cmd_sweep(args, rep: _Reporter) -> int:
    spec, programs, caps = _load_sweep(args.sweep)
    model = check_cost_model(args.cost_model)
    bound = spec.get("bound_s")
    threshold = spec.get("threshold", args.threshold)
    cells, results, any_warn = [], [], False
    for pname, ppath in programs:
        prog = _read_program(ppath)
        for cname, cobj in caps:
            cfg = check_energy_config(cobj, model)
            est = _analyzer(args, cfg, spec.get("function")).fit(prog)
            any_warn |= bool(est.warnings_)
            for w, kind in zip(est.warnings_, est.warning_kinds_):
                rep.warning(f"[{pname}/{cname}] {w}", kind)
            req = ir.Expires(est.function_, float(bound)) if bound is not None else (
                est.program_.requirements[0] if est.program_.requirements else None)
            cell = {"program": pname, "capacitor": cname, "e_max_nj": cfg.e_max,
                    "mean_ms": est.timing_.mean() / 1e3, "std_ms": est.timing_.std() / 1e3,
                    "nonterminating": len(est.nonterminating_)}
            if req is not None:
                r = est.set_params(threshold=threshold).evaluate(req)
                cell.update(bound_s=req.bound_s, probability=r.probability,
                            threshold=r.threshold, meets=r.meets)
            cells.append(cell)
            results.append(est.result(f"{pname}__{cname}"))
    out = _out_dir(args)
    write_sweep(cells, out)
    emit_outputs(results, out, gnuplot=args.gnuplot)
    for c in cells:
        p = c.get("probability")
        ptxt = f"P = {p:.6g} {'meets' if c['meets'] else 'misses'}" if p is not None else "no bound"
        print(f"{c['program']:>16} {c['capacitor']:>12}  mean {c['mean_ms']:.6g} ms  {ptxt}")
    return 1 if args.strict and any_warn else 0


def _common(p, sim=False):
    p.add_argument("-p", "--program", required=True, help="ETIR source file")
    p.add_argument("-c", "--cost-model", help="cost model JSON (default: bundled MSP430FR5994)")
    p.add_argument("-e", "--energy", help="energy config JSON; omit for continuous power")
    p.add_argument("--capacitance", type=float, help="capacitance in farads (instead of -e)")
    p.add_argument("--v-on", type=float, help="full-charge voltage")
    p.add_argument("--v-off", type=float, default=0.0, help="brown-out voltage")
    p.add_argument("--tau-harvest", help="recharge time distribution, e.g. 'normal(10715, 630)'")
    p.add_argument("--function", help="function to analyze (default: entry)")
    _limits(p)
    if sim:
        _sim(p)


def _limits(p):
    p.add_argument("--max-loop", type=int, default=32)
    p.add_argument("--prob-floor", type=float, default=1e-9)
    p.add_argument("--grid-len", type=int, default=4096)
    p.add_argument("--threshold", type=float, help="confidence threshold (default 0.8 or per requirement)")
    p.add_argument("--consolidate", action="store_true", help="merge surviving branches per region")
    p.add_argument("--no-split", action="store_true", help="skip outlier block splitting")


def _sim(p):
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intermit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--out", help="output directory (default: $ETAP_OUT_DIR or ./out)")
        p.add_argument("--strict", action="store_true", help="exit 1 when warnings are present")
        p.add_argument("--json-diagnostics", action="store_true", help="diagnostics as JSON lines")
        p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")

    a = sub.add_parser("analyze", help="analytic execution-time distribution")
    _common(a)
    shared(a)
    a.add_argument("--dot", action="store_true", help="also write a Graphviz CFG")
    s = sub.add_parser("simulate", help="Monte Carlo simulation")
    _common(s, sim=True)
    shared(s)
    c = sub.add_parser("compare", help="analysis against simulation")
    _common(c, sim=True)
    shared(c)
    c.add_argument("--mean-tol", type=float)
    c.add_argument("--std-tol", type=float)
    c.add_argument("--ks-tol", type=float)
    w = sub.add_parser("sweep", help="capacitor and program variant grid")
    w.add_argument("--sweep", required=True, help="sweep spec JSON")
    w.add_argument("-c", "--cost-model")
    _limits(w)
    shared(w)
    return ap


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "compare": cmd_compare, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.function = getattr(args, "function", None)
    rep = _Reporter(args.json_diagnostics)
    for name in ("max_loop", "grid_len"):
        if getattr(args, name) < 1:
            rep.emit("error", f"--{name.replace('_', '-')} must be positive", "ConfigError")
            return 2
    try:
        return COMMANDS[args.command](args, rep)
    except EtirSyntaxError as exc:
        rep.error(exc, getattr(args, "program", None))
        return 2
    except (IntermitError, OSError, ValueError, TypeError, KeyError) as exc:
        rep.error(exc, getattr(args, "program", None) if isinstance(exc, ir.IRError) else None)
        return 2


if __name__ == "__main__":
    sys.exit(main())
