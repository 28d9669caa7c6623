"""Command-line front end: ``wstate <subcommand> [flags]``.

Subcommands: simulate, optimize, scan-fidelity, design, yield, contamination.
JSON goes to stdout, diagnostics to stderr. Exit codes: 0 ok, 2 usage or
config error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

from . import analysis
from .elements import ModeMap
from .fock import RegistryError
from .postselection import DetectorModel, postselect, trigger_select
from .schemes import (OPTIMAL_R2, SIGNAL, STAGES, SchemeParams, build, canonical_scheme,
                      load_circuit)

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 2, 3


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def emit_json(payload) -> str:
    return json.dumps(_clean(payload), indent=2, allow_nan=False)


def fmt(x: float) -> str:
    return format(x, ".17g")


# -- config handling --------------------------------------------------------------

NUMERIC = {"r1sq", "r2sq", "r3sq", "phi1", "phi2", "phi3", "psi1", "psi2", "psi3",
           "gamma", "sps_rate", "stimulated_gain", "ghz_reference", "efficiency",
           "step", "resolution", "jobs"}
TEXT = {"scheme", "trigger", "output", "dump_state", "circuit", "compensation",
        "delta", "target", "d1", "d2", "d3", "bounds", "policy"}
FLAGS = {"threshold"}


def apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {args.config}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in data.items():
        field = key.replace("-", "_")
        if field not in NUMERIC | TEXT | FLAGS or not hasattr(args, field):
            raise ConfigError(f"unknown config field {key!r} for '{args.command}'")
        if field in NUMERIC and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(f"config field {key!r} must be a number")
        if field in FLAGS and not isinstance(value, bool):
            raise ConfigError(f"config field {key!r} must be true or false")
        if field in TEXT:
            if field == "target" and isinstance(value, list):
                value = ",".join(str(v) for v in value)
            elif field == "delta" and isinstance(value, dict):
                value = ",".join(f"{k}={v}" for k, v in value.items())
            elif not isinstance(value, str):
                raise ConfigError(f"config field {key!r} must be a string")
        setattr(args, field, value)
    return args


def _parse_delta(text: str | None) -> dict:
    delta = {}
    if not text:
        return delta
    for item in text.split(","):
        try:
            key, val = item.split("=")
            key = key.strip()
            delta[(int(key[:-1]), key[-1].upper())] = float(val)
        except ValueError:
            raise ConfigError(f"bad delta entry {item!r}; use e.g. 2H=0.01") from None
    return delta


def params_from_args(args, scheme: str) -> SchemeParams:
    r2 = {}
    for k in STAGES[scheme]:
        v = getattr(args, f"r{k}sq")
        r2[k] = OPTIMAL_R2[scheme][k] if v is None else v
    phi = {k: getattr(args, f"phi{k}") for k in (1, 2, 3)}
    psi = {k: getattr(args, f"psi{k}") for k in (1, 2, 3)}
    delta = {key: v for key, v in _parse_delta(args.delta).items() if key[0] in r2}
    try:
        return SchemeParams(r2, phi, psi, args.compensation, delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _range(text: str | None):
    if text is None:
        return (0.0, 0.0)
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"bad range {text!r}; use lo:hi") from None
    return (lo, hi)


# -- commands ---------------------------------------------------------------------

def _check_invariants(circuit, result):
    u = circuit.transfer()
    if not u.is_unitary():
        raise InvariantViolation(f"composed mode map not unitary (error {u.unitarity_error():.3g})")
    if not -1e-12 <= result.probability <= 1 + 1e-12:
        raise InvariantViolation(f"probability {result.probability} outside [0, 1]")
    if not result.empty and not result.conditional.normalized:
        raise InvariantViolation("conditional state is not normalized")


def cmd_simulate(args) -> dict:
    if args.circuit:
        try:
            circuit = load_circuit(args.circuit)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load circuit {args.circuit}: {exc}") from None
        scheme, params = "custom", None
    else:
        scheme = canonical_scheme(args.scheme)
        params = params_from_args(args, scheme)
        circuit = build(scheme, params)
    result = postselect(circuit)
    _check_invariants(circuit, result)
    report = {"scheme": scheme, "probability": result.probability}
    if params is not None:
        report["params"] = params.to_json()
        if params.polarization_independent:
            report["closed_form_probability"] = analysis.closed_form_probability(scheme, params)
    if args.dump_state and not result.empty:
        with open(args.dump_state, "w") as fh:
            fh.write(result.conditional.to_dump())
    if result.empty:
        report["fidelity_w_v"] = None
        report["fidelity_note"] = "not-applicable: post-selection probability is zero"
        return report
    if set(circuit.signal) != set(SIGNAL):
        report["fidelity_w_v"] = None
        report["fidelity_note"] = "not-applicable: signal modes are not 2, 3, 3'"
        return report
    if circuit.trigger is None:
        report["fidelity_w_v"] = analysis.fidelity(result.conditional, analysis.w_v())
        return report
    branches = {}
    for trig in ("D1V", "D1H"):
        sel = trigger_select(result, trig, rotate_on_H=True, trigger_mode=circuit.trigger,
                             signal=circuit.signal)
        branches[trig.lower()] = {
            "probability": sel.probability,
            "fidelity_w_v": None if sel.empty else analysis.fidelity(sel.conditional, analysis.w_v()),
        }
    if abs(sum(b["probability"] for b in branches.values()) - result.probability) > 1e-10:
        raise InvariantViolation("trigger branches do not add up to the post-selected probability")
    report["branches"] = branches
    report["trigger"] = args.trigger
    picked = [branches[t] for t in (("d1v", "d1h") if args.trigger == "both" else (args.trigger,))]
    weight = sum(b["probability"] for b in picked if b["fidelity_w_v"] is not None)
    report["fidelity_w_v"] = (sum(b["probability"] * b["fidelity_w_v"] for b in picked
                                  if b["fidelity_w_v"] is not None) / weight) if weight else None
    report["w_v_probability"] = sum(b["probability"] for b in picked)
    return report


def cmd_optimize(args) -> dict:
    scheme = canonical_scheme(args.scheme)
    bounds = None
    if args.bounds:
        try:
            bounds = [tuple(float(v) for v in b.split(":")) for b in args.bounds.split(",")]
        except ValueError:
            raise ConfigError(f"bad bounds {args.bounds!r}; use lo:hi,lo:hi,...") from None
    res = analysis.optimize_probability(scheme, bounds, int(args.resolution))
    report = res.to_json()
    stated = report["paper_claim"]["value"]
    report["difference_from_paper_claim"] = res.best_value - stated
    if scheme in ("I", "II", "SPS"):
        report["closed_form_at_best"] = analysis.closed_form_probability(scheme, res.best_params)
    report["trace"] = [list(p) + [v] for p, v in res.trace]
    return report


def cmd_scan(args):
    scheme = canonical_scheme(args.scheme)
    ranges = {1: _range(args.d1), 2: _range(args.d2), 3: _range(args.d3)}
    rows, fit = analysis.scan_fidelity(scheme, ranges, float(args.step), args.trigger,
                                       int(args.jobs))
    stated = analysis.STATED_QUADRATIC.get(scheme, {})
    if args.output == "json":
        return {"scheme": scheme, "rows": [list(r) for r in rows],
                "fit": [{"term": f"d{j}*d{k}", "fitted": c, "printed": stated.get((j, k))}
                        for (j, k), c in sorted(fit.items())]}
    lines = ["delta1,delta2,delta3,fidelity"]
    for r in rows:
        lines.append(",".join(fmt(v) if math.isfinite(v) else "nan" for v in r))
    if fit:
        lines.append("# fit,term,fitted,printed")
        for (j, k), c in sorted(fit.items()):
            p = stated.get((j, k))
            lines.append(f"# fit,d{j}*d{k},{fmt(c)},{'' if p is None else fmt(p)}")
    return "\n".join(lines) + "\n"


def _parse_target(text: str):
    try:
        values = [complex(v.strip().replace(" ", "")) for v in text.split(",")]
        return analysis.WTarget.from_values(values)
    except ValueError as exc:
        raise ConfigError(f"target {text!r}: {exc}") from None


def cmd_design(args) -> dict:
    if not args.target:
        raise ConfigError("design needs --target a,b,c")
    target = _parse_target(args.target)
    design = analysis.design_w_class(target, canonical_scheme(args.scheme))
    fid, prob = design.verify()
    report = design.to_json()
    report["verified_fidelity"] = fid
    report["simulated_probability"] = prob
    if not math.isfinite(fid) and max(abs(a) for a in target.amplitudes) > 0:
        raise InvariantViolation("designed circuit never heralds")
    return report


def cmd_yield(args) -> dict:
    model = analysis.YieldModel(args.gamma, args.sps_rate, args.stimulated_gain,
                                args.ghz_reference)
    return analysis.yield_report(model)


def cmd_contamination(args) -> dict:
    model = analysis.YieldModel(gamma=args.gamma)
    det = DetectorModel(args.efficiency, not args.threshold)
    return analysis.contamination_estimate(canonical_scheme(args.scheme), model, det)


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wstate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scheme_default="I"):
        p.add_argument("--config", help="JSON file whose fields override the flags")
        p.add_argument("--scheme", default=scheme_default, help="I, II or SPS")

    sim = sub.add_parser("simulate", help="post-select one scheme configuration")
    common(sim)
    for k in (1, 2, 3):
        sim.add_argument(f"--r{k}sq", type=float, default=None,
                         help=f"reflectivity r_{k}^2 (default: stated optimum)")
    for k in (1, 2, 3):
        sim.add_argument(f"--phi{k}", type=float, default=0.0)
        sim.add_argument(f"--psi{k}", type=float, default=0.0)
    sim.add_argument("--delta", help="per-polarization offsets, e.g. 2H=0.005,2V=-0.005")
    sim.add_argument("--compensation", choices=("auto", "none"), default="auto")
    sim.add_argument("--trigger", choices=("d1v", "d1h", "both"), default="both")
    sim.add_argument("--circuit", help="hand-written circuit JSON instead of --scheme")
    sim.add_argument("--dump-state", dest="dump_state", help="write the post-selected state here")
    sim.add_argument("--output", choices=("json",), default="json")
    sim.set_defaults(func=cmd_simulate)

    opt = sub.add_parser("optimize", help="maximize the post-selection probability")
    common(opt)
    opt.add_argument("--bounds", help="lo:hi per stage, comma separated")
    opt.add_argument("--resolution", type=int, default=64)
    opt.set_defaults(func=cmd_optimize)

    scan = sub.add_parser("scan-fidelity", help="fidelity grid over reflectivity differences")
    common(scan)
    scan.add_argument("--d1", help="lo:hi range of d_1 (default 0:0)")
    scan.add_argument("--d2", help="lo:hi range of d_2")
    scan.add_argument("--d3", help="lo:hi range of d_3")
    scan.add_argument("--step", type=float, default=0.01)
    scan.add_argument("--trigger", choices=("d1v", "d1h", "both"), default="d1v")
    scan.add_argument("--output", choices=("csv", "json"), default="csv")
    scan.add_argument("--jobs", type=int, default=1)
    scan.set_defaults(func=cmd_scan)

    des = sub.add_parser("design", help="losses and phases for a W-class target")
    common(des)
    des.add_argument("--target", help="three amplitudes a,b,c (complex allowed, e.g. 0.5j)")
    des.set_defaults(func=cmd_design)

    yl = sub.add_parser("yield", help="rate comparison table")
    yl.add_argument("--config")
    yl.add_argument("--gamma", type=float, default=1e-4)
    yl.add_argument("--sps-rate", dest="sps_rate", type=float, default=0.4)
    yl.add_argument("--stimulated-gain", dest="stimulated_gain", type=float, default=16.0)
    yl.add_argument("--ghz-reference", dest="ghz_reference", type=float, default=3 / 8)
    yl.set_defaults(func=cmd_yield)

    con = sub.add_parser("contamination", help="three-pair false accepts")
    common(con)
    con.add_argument("--gamma", type=float, default=1e-4)
    con.add_argument("--efficiency", type=float, default=1.0)
    con.add_argument("--threshold", action="store_true",
                     help="non-number-resolving (click/no-click) detectors")
    con.set_defaults(func=cmd_contamination)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = apply_config(args)
        out = args.func(args)
    except InvariantViolation as exc:
        print(f"wstate: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValueError, RegistryError) as exc:
        print(f"wstate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    sys.stdout.write(out if isinstance(out, str) else emit_json(out) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
