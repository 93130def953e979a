"""Command-line front end.

Exit codes: 0 success, 1 invalid model or arguments, 2 numerical failure
(non-convergence, quadrature), 3 optimality not certified under
``--require-optimal``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from smpstop.equivalence import build_smdp, induce_policy, round_trip_check, smdp_value_iterate
from smpstop.errors import ModelError, NoWitnessError, NumericalError
from smpstop.model import Model, find_regularity_witness, load_model
from smpstop.moments import QuadratureConfig, compute_moments, contraction_modulus
from smpstop.simulate import default_horizon, estimate_value, sample_jump_paths, simulate_smdp_policy
from smpstop.solver import (
    DEFAULT_MAX_ITERS,
    brute_force_optimum,
    compute_iteration_budget,
    uncorrected_iteration_budget,
    value_iterate,
    value_sequence,
)
from smpstop.stopping import (
    DEFAULT_EPSILON,
    DEFAULT_EQ_TOL,
    FirstEpoch,
    HittingSet,
    Predicate,
    extract_stop_set,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_NOT_CERTIFIED = 0, 1, 2, 3
BUNDLED = ("maintenance",)


@dataclass
class RunReport:
    model_digest: str
    subcommand: str
    parameters: dict[str, Any]
    results: dict[str, Any] = field(default_factory=dict)
    wall_clock: float = 0.0
    artifacts: dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    lines: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_digest": self.model_digest,
            "subcommand": self.subcommand,
            "seed": self.seed,
            "parameters": self.parameters,
            "results": self.results,
            "wall_clock": self.wall_clock,
            "artifacts": self.artifacts,
        }

    def render(self) -> str:
        head = [
            f"subcommand   {self.subcommand}",
            f"model        {self.model_digest[:16]}",
        ]
        if self.seed is not None:
            head.append(f"seed         {self.seed}")
        tail = [f"wall clock   {self.wall_clock:.3f} s"]
        tail += [f"{name:<12} {path}" for name, path in self.artifacts.items()]
        return "\n".join(head + [""] + self.lines + [""] + tail)


def resolve_model_path(arg: str) -> Path:
    """A path on disk, or the name of a bundled model (e.g. ``maintenance.json``)."""
    path = Path(arg)
    if path.exists():
        return path
    stem = path.stem if path.suffix == ".json" else path.name
    if stem in BUNDLED:
        return Path(str(resources.files("smpstop") / "data" / f"{stem}.json"))
    return path


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


def _value_table(model: Model, columns: dict[str, Sequence[float]]) -> list[str]:
    names = list(columns)
    width = max(5, max(len(s) for s in model.states))
    rows = [f"{'state':<{width}}  " + "  ".join(f"{n:>14}" for n in names)]
    for i, s in enumerate(model.states):
        rows.append(f"{s:<{width}}  " + "  ".join(f"{columns[n][i]:>14.7f}" for n in names))
    return rows


def _state_names(model: Model, idx) -> list[str]:
    return [model.states[i] for i in sorted(idx)]


def _parse_rule(model: Model, text: str):
    kind, _, arg = text.partition(":")
    if kind == "hitting":
        names = [s for s in arg.split(",") if s.strip()]
        return HittingSet(model.index(s.strip()) for s in names)
    if kind == "first":
        try:
            n = int(arg)
        except ValueError:
            raise ModelError(f"first:<n> needs an integer epoch, got {arg!r}") from None
        if n < 0:
            raise ModelError("first:<n> needs n >= 0")
        return FirstEpoch(n)
    raise ModelError(f"rule must be hitting:<states> or first:<n>, got {text!r}")


def _time_threshold_rule(threshold: float) -> Predicate:
    return Predicate.first_time(lambda h: sum(h.sojourns) > threshold,
                                label=f"elapsed>{threshold:.4g}")


def _cmd_solve(model, moments, args, report):
    vf = value_iterate(model, moments, tol=args.tol, max_iters=args.max_iters,
                       record_trace=bool(args.trace))
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "sup_diff", "error_bound"])
            for row in vf.trace:
                w.writerow([row[0], repr(row[1]), repr(row[2])])
        report.artifacts["trace"] = str(args.trace)
    report.results = {
        "values": dict(zip(model.states, vf.values.tolist())),
        "iterations": vf.iterations,
        "sup_diff": vf.sup_diff,
        "error_bound": vf.error_bound,
        "gamma_tight": contraction_modulus(moments),
        "converged": vf.converged,
    }
    report.lines = _value_table(model, {"V": vf.values})
    report.lines += [
        "",
        f"iterations   {vf.iterations}",
        f"sup diff     {vf.sup_diff:.3e}",
        f"error bound  {vf.error_bound:.3e}",
        f"gamma tight  {contraction_modulus(moments):.7f}",
        f"converged    {'yes' if vf.converged else 'NO'}",
    ]
    return EXIT_OK if vf.converged else EXIT_NUMERICAL


def _cmd_certify(model, moments, args, report):
    witness = find_regularity_witness(model, delta=args.delta)
    budget = compute_iteration_budget(model, witness, args.epsilon)
    literal = uncorrected_iteration_budget(model, witness, args.epsilon)
    vf = value_iterate(model, moments, tol=0.0, max_iters=budget)
    cert = extract_stop_set(model, moments, vf.values, eq_tol=args.eq_tol,
                            epsilon_opt=args.epsilon, iteration_budget=budget)
    arg = args.epsilon * (witness.epsilon_reg - math.exp(-model.beta * witness.delta_star))
    if literal is None:
        note = (f"the budget formula with log(eps*(eps_reg - exp(-beta*delta*))) is undefined here "
                f"(argument {arg:.3e} <= 0); using 1 - gamma = eps_reg*(1 - exp(-beta*delta*))")
    else:
        note = f"budget formula with eps_reg - exp(-beta*delta*) in place of 1 - gamma gives {literal}"
    report.results = {
        "stop_set": _state_names(model, cert.stop_set),
        "epsilon": args.epsilon,
        "margin": cert.margin,
        "certified_optimal": cert.certified_optimal,
        "near_boundary": _state_names(model, cert.near_boundary),
        "iteration_budget": budget,
        "uncorrected_budget": literal,
        "witness": {"delta": witness.delta, "epsilon_reg": witness.epsilon_reg,
                    "delta_star": witness.delta_star, "gamma": witness.gamma},
        "values": dict(zip(model.states, vf.values.tolist())),
        "continuation": dict(zip(model.states, cert.continuation.tolist())),
        "note": note,
    }
    report.lines = _value_table(model, {
        "V_N": vf.values, "g": model.terminal_cost, "continuation": cert.continuation})
    report.lines += [
        "",
        f"stop set           {{{', '.join(_state_names(model, cert.stop_set))}}}",
        f"margin             {cert.margin:.6g}",
        f"epsilon            {args.epsilon:g}",
        f"certified optimal  {'yes' if cert.certified_optimal else 'no (' + cert.status + ')'}",
        f"iteration budget   {budget}",
        f"witness            delta={witness.delta:.4g} eps_reg={witness.epsilon_reg:.6g} "
        f"gamma={witness.gamma:.8f}",
        f"note               {note}",
    ]
    if cert.near_boundary:
        report.lines.append(f"near boundary      {', '.join(_state_names(model, cert.near_boundary))}")
    if args.require_optimal and not cert.certified_optimal:
        return EXIT_NOT_CERTIFIED
    return EXIT_OK


def _cmd_oracle(model, moments, args, report):
    vf = value_iterate(model, moments, tol=args.tol)
    brute, best = brute_force_optimum(model, moments)
    gap = float(np.max(np.abs(brute.values - vf.values)))
    report.results = {
        "value_iteration": dict(zip(model.states, vf.values.tolist())),
        "brute_force": dict(zip(model.states, brute.values.tolist())),
        "argmin_set": _state_names(model, best),
        "max_abs_gap": gap,
        "subsets": 2 ** model.n_states,
    }
    report.lines = _value_table(model, {"value iter": vf.values, "brute force": brute.values})
    report.lines += [
        "",
        f"subsets evaluated  {2 ** model.n_states}",
        f"argmin set         {{{', '.join(_state_names(model, best))}}}",
        f"max |gap|          {gap:.3e}",
    ]
    return EXIT_OK if vf.converged else EXIT_NUMERICAL


def _cmd_simulate(model, moments, args, report):
    rule = _parse_rule(model, args.rule)
    start = model.index(args.start)
    horizon = args.horizon if args.horizon is not None else default_horizon(model)
    est = estimate_value(model, start, rule, args.reps, horizon=horizon, seed=args.seed)
    report.seed = args.seed
    report.results = {"rule": args.rule, "start": model.states[start], "horizon": horizon,
                      "smp": est.as_dict()}
    report.lines = [
        f"rule         {args.rule}",
        f"start        {model.states[start]}",
        f"horizon      {horizon:.6g}",
        "",
        f"{'process':<8} {'reps':>9} {'mean':>14} {'std err':>12} {'trunc bias':>11}",
        f"{'smp':<8} {est.replications:>9} {est.mean:>14.6f} {est.std_error:>12.6f} "
        f"{est.truncation_bias_bound:>11.2e}",
    ]
    rows = [("smp", est)]
    if args.smdp:
        smdp_seed = args.seed + 1 if args.smdp_seed is None else args.smdp_seed
        alt = simulate_smdp_policy(build_smdp(model), start, induce_policy(rule), args.reps,
                                   horizon=args.horizon, seed=smdp_seed)
        combined = math.hypot(est.std_error, alt.std_error)
        report.results["smdp"] = alt.as_dict()
        report.results["difference"] = alt.mean - est.mean
        report.results["combined_se"] = combined
        report.lines.append(
            f"{'smdp':<8} {alt.replications:>9} {alt.mean:>14.6f} {alt.std_error:>12.6f} "
            f"{alt.truncation_bias_bound:>11.2e}")
        report.lines += ["", f"difference   {alt.mean - est.mean:.6f} "
                             f"({abs(alt.mean - est.mean) / combined:.2f} combined SE)"]
        rows.append(("smdp", alt))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["process", "replications", "mean", "std_error", "truncation_bias_bound", "seed"])
            for name, r in rows:
                w.writerow([name, r.replications, repr(r.mean), repr(r.std_error),
                            repr(r.truncation_bias_bound), r.seed])
        report.artifacts["csv"] = str(args.csv)
    return EXIT_OK


def _cmd_check_equivalence(model, moments, args, report):
    n = model.n_states
    rng = np.random.default_rng(args.seed)
    starts = [int(s) for s in rng.integers(0, n, size=args.paths)]
    paths = sample_jump_paths(model, starts, args.len, args.paths, seed=args.seed)
    vf = value_iterate(model, moments)
    stop_set = extract_stop_set(model, moments, vf.values).stop_set
    mean_time = float(np.mean([sum(p.sojourns) for p in paths])) if paths else 1.0
    threshold = float(rng.uniform(0.2, 0.8)) * mean_time
    rules = [
        (f"hitting {{{', '.join(_state_names(model, stop_set))}}}", HittingSet(stop_set)),
        ("hitting {}", HittingSet(())),
        (f"first epoch {min(5, args.len)}", FirstEpoch(min(5, args.len))),
        (f"elapsed time > {threshold:.4g}", _time_threshold_rule(threshold)),
    ]
    round_trips = {}
    ok = True
    report.lines = [f"round trip on {args.paths} paths of length {args.len}"]
    for label, rule in rules:
        res = round_trip_check(rule, paths)
        ok &= res.ok
        round_trips[label] = {"ok": res.ok, "checked": res.checked}
        line = f"  {label:<28} {'ok' if res.ok else 'MISMATCH'}"
        if not res.ok:
            line += f" at path {res.checked}: {res.expected} vs {res.got}"
        report.lines.append(line)
    us = smdp_value_iterate(build_smdp(model), moments, args.n_max)
    vs = value_sequence(model, moments, args.n_max)
    gap = max(float(np.max(np.abs(u[:n] - v))) for u, v in zip(us, vs))
    delta_max = max(abs(float(u[n])) for u in us)
    report.lines += [
        "",
        f"decision-process iteration vs value iteration, n <= {args.n_max}",
        f"  max |U_n(i) - V_n(i)|   {gap:.3e}",
        f"  max |U_n(DELTA)|        {delta_max:.3e}",
    ]
    report.seed = args.seed
    report.results = {"round_trip": round_trips, "max_u_v_gap": gap, "max_u_delta": delta_max,
                      "n_max": args.n_max}
    return EXIT_OK if ok and gap <= 1e-12 and delta_max == 0 else EXIT_NUMERICAL


COMMANDS = {
    "solve": _cmd_solve,
    "certify": _cmd_certify,
    "oracle": _cmd_oracle,
    "simulate": _cmd_simulate,
    "check-equivalence": _cmd_check_equivalence,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("model", help="model JSON file (or a bundled name such as maintenance.json)")
    common.add_argument("--quad-tol", type=float, default=1e-9)
    common.add_argument("--quad-max-refine", type=int, default=20)
    common.add_argument("--json", action="store_true", help="print a machine-readable report")

    parser = argparse.ArgumentParser(prog="smpstop", description="Discounted optimal stopping "
                                     "on semi-Markov processes.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="value iteration to the fixed point")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    p.add_argument("--trace", type=Path, help="write iteration,sup_diff,error_bound rows here")

    p = sub.add_parser("certify", parents=[common], help="stopping set and optimality certificate")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--eq-tol", type=float, default=DEFAULT_EQ_TOL)
    p.add_argument("--delta", type=float, help="fix the regularity delta instead of searching")
    p.add_argument("--require-optimal", action="store_true")

    p = sub.add_parser("oracle", parents=[common], help="brute-force check over all stop sets")
    p.add_argument("--tol", type=float, default=1e-12)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate of a rule's cost")
    p.add_argument("--start", required=True)
    p.add_argument("--rule", required=True, help="hitting:<comma-list> or first:<n>")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smdp", action="store_true",
                   help="also simulate the decision process under the induced policy")
    p.add_argument("--smdp-seed", type=int, help="seed for the --smdp run (default seed+1)")
    p.add_argument("--csv", type=Path)

    p = sub.add_parser("check-equivalence", parents=[common],
                       help="policy/stopping-time round trip and U = V comparison")
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--len", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-max", type=int, default=50)
    return parser


def run(argv: Sequence[str] | None = None, echo: bool = True) -> tuple[int, RunReport | None]:
    """Execute one subcommand; ``echo`` prints the report to stdout."""
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        model = load_model(resolve_model_path(args.model))
        moments = compute_moments(model, QuadratureConfig(args.quad_tol, args.quad_max_refine))
        params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                  if k not in ("json",)}
        report = RunReport(model.digest(), args.command, params)
        code = COMMANDS[args.command](model, moments, args, report)
    except (ModelError, NoWitnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, None
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL, None
    report.wall_clock = time.perf_counter() - started
    if echo:
        print(json.dumps(_jsonable(report.to_dict()), indent=2) if args.json else report.render())
    return code, report


def main(argv: Sequence[str] | None = None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
