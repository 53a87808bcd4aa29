"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver non-convergence,
4 failed precondition.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import errors
from .bellman import boundedness_verdict, solve_discounted, span_curve, span_curve_csv
from .gain import default_schedule, duality_report, relative_value_iteration, solve_constant_gain
from .model import StationaryAdversaryPolicy, StationaryControllerPolicy, load_instance
from .oracle import exhaustive_values
from .simulate import (ModelBasedLearner, Stationary, StationaryAdversary, TwoPhaseAdversary,
                       TwoPhaseController, hd_s_gap_demo, run)
from .structure import structure_report

EXIT_OK, EXIT_INVALID, EXIT_NONCONV, EXIT_PRECONDITION = 0, 2, 3, 4


def _emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj):
    return json.dumps(obj, indent=2) + "\n"


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _mu(args, inst):
    """Initial distribution: a state label or index, 'uniform', or a comma list."""
    text = args.mu
    if text is None:
        text = "0"
    if text == "uniform":
        return np.ones(inst.n_states) / inst.n_states
    if "," in text:
        return np.array(_floats(text))
    mu = np.zeros(inst.n_states)
    mu[inst.state_index(text)] = 1.0
    return mu


def _actions(inst, text):
    names = inst.action_labels or ()
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        out.append(names.index(tok) if tok in names else int(tok))
    if len(out) != inst.n_states:
        raise errors.ValidationError(f"{len(out)} actions for {inst.n_states} states", "controller")
    return StationaryControllerPolicy.deterministic(out, inst.n_actions).probs


def _kernels(inst, text):
    if text == "nominal":
        return StationaryAdversaryPolicy.nominal(inst).kernel
    idx = [int(t) for t in text.split(",")]
    return StationaryAdversaryPolicy.from_indices(inst, idx).kernel


def _controller_spec(inst, text):
    if text == "learner":
        return ModelBasedLearner()
    if text.startswith("actions:"):
        return Stationary(_actions(inst, text[len("actions:"):]))
    if text.startswith("twophase:"):
        body, y = text[len("twophase:"):].split("@")
        pre, post = body.split("/")
        return TwoPhaseController(_actions(inst, pre), _actions(inst, post), inst.state_index(y))
    raise errors.ValidationError(f"unrecognized controller spec {text!r}", "controller")


def _adversary_spec(inst, text):
    if text.startswith("kernels:"):
        return StationaryAdversary(_kernels(inst, text[len("kernels:"):]))
    if text == "nominal":
        return StationaryAdversary(_kernels(inst, "nominal"))
    if text.startswith("twophase:"):
        body, y = text[len("twophase:"):].split("@")
        pre, post = body.split("/")
        return TwoPhaseAdversary(_kernels(inst, pre), _kernels(inst, post), inst.state_index(y))
    raise errors.ValidationError(f"unrecognized adversary spec {text!r}", "adversary")


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args, inst):
    _emit(args, _json({"valid": True, "n_states": inst.n_states, "n_actions": inst.n_actions,
                       "controller_set": inst.controller_set.variant,
                       "ambiguity": [a.variant for a in inst.ambiguity]}))
    return EXIT_OK


def cmd_solve_discounted(args, inst):
    vf = solve_discounted(args.gamma, args.orientation, inst, tol=args.tol or 1e-8,
                          max_iters=args.max_iters, method=args.method)
    _emit(args, _json({"gamma": vf.gamma, "orientation": vf.orientation.value,
                       "values": vf.values.tolist(), "residual": vf.residual,
                       "iterations": vf.iterations, "method": vf.method}))
    return EXIT_OK


def cmd_solve_gain(args, inst):
    if args.experimental_rvi:
        sol = relative_value_iteration(args.orientation, inst, tol=args.tol or 1e-6)
    else:
        sol = solve_constant_gain(args.orientation, inst, default_schedule(args.k_min, args.k_max),
                                  tol=args.tol or 1e-6)
    _emit(args, _json(sol.to_json()))
    return EXIT_OK if sol.converged else EXIT_NONCONV


def cmd_span_curve(args, inst):
    recs = span_curve(_floats(args.gammas), args.orientation, inst)
    if args.json:
        _emit(args, _json({"records": [r.__dict__ for r in recs],
                           "verdict": boundedness_verdict(recs, args.tol or 1e-6)}))
    else:
        _emit(args, span_curve_csv(recs))
    return EXIT_OK


def cmd_check_structure(args, inst):
    rep = structure_report(inst)
    _emit(args, _json(rep.to_json(witnesses=args.witnesses)))
    return EXIT_OK


def cmd_simulate(args, inst):
    stats = run(inst, _mu(args, inst), _controller_spec(inst, args.controller),
                _adversary_spec(inst, args.adversary), args.steps, args.trajectories, args.seed)
    if args.csv_out:
        with open(args.csv_out, "w") as fh:
            fh.write(stats.series_csv())
    _emit(args, _json(stats.to_json()))
    return EXIT_OK


def cmd_oracle_compare(args, inst):
    tol = args.tol or 1e-6
    rep = duality_report(inst, tol)
    orc = exhaustive_values(inst)
    S = inst.n_states
    mus = [(inst.state_name(s), np.eye(S)[s]) for s in range(S)] + [("uniform", np.ones(S) / S)]
    rows = []
    for name, mu in mus:
        try:
            sup = orc.supinf_gain(mu)
        except errors.OracleRefused:
            sup = None
        rows.append({"mu": name, "solver_supinf": rep.alpha_supinf, "oracle_supinf": sup,
                     "solver_infsup": rep.alpha_infsup, "oracle_infsup": orc.infsup_gain(mu)})
    if args.json:
        _emit(args, _json({"verdict": rep.verdict, "rows": rows}))
        return EXIT_OK

    def fmt(x):
        return "refused" if x is None else f"{x:.6f}"

    lines = [f"{'mu':<10} {'solver_supinf':>14} {'oracle_supinf':>14} "
             f"{'solver_infsup':>14} {'oracle_infsup':>14}"]
    for r in rows:
        lines.append(f"{r['mu']:<10} {fmt(r['solver_supinf']):>14} {fmt(r['oracle_supinf']):>14} "
                     f"{fmt(r['solver_infsup']):>14} {fmt(r['oracle_infsup']):>14}")
    lines.append(f"solver verdict: {rep.verdict}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_hd_s_demo(args, inst):
    rep = hd_s_gap_demo(inst, tol=args.tol or 1e-6, seed=args.seed, n_steps=args.steps,
                        n_trajectories=args.trajectories)
    _emit(args, _json(rep))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", required=True, help="instance JSON file")
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output where both are offered")
    fmt.add_argument("--csv", action="store_true", help="CSV output where both are offered")
    common.add_argument("--out", default=None, help="write the main output here instead of stdout")

    parser = argparse.ArgumentParser(prog="armdp", description="Average-reward robust MDP toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common]).set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-discounted", parents=[common])
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--orientation", default="supinf", choices=["supinf", "infsup"])
    p.add_argument("--method", default="vi", choices=["vi", "exact"])
    p.add_argument("--max-iters", type=int, default=1_000_000)
    p.set_defaults(func=cmd_solve_discounted)

    p = sub.add_parser("solve-gain", parents=[common])
    p.add_argument("--orientation", default="supinf", choices=["supinf", "infsup"])
    p.add_argument("--k-min", type=int, default=4)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--experimental-rvi", action="store_true",
                   help="relative value iteration instead of vanishing discount (comparison only)")
    p.set_defaults(func=cmd_solve_gain)

    p = sub.add_parser("span-curve", parents=[common])
    p.add_argument("--gammas", default="0.9,0.99,0.999")
    p.add_argument("--orientation", default="supinf", choices=["supinf", "infsup"])
    p.set_defaults(func=cmd_span_curve)

    p = sub.add_parser("check-structure", parents=[common])
    p.add_argument("--witnesses", action="store_true")
    p.set_defaults(func=cmd_check_structure)

    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--controller", required=True,
                   help="actions:A0,A1,..  |  learner  |  twophase:ETA/DELTA@Y")
    p.add_argument("--adversary", required=True,
                   help="kernels:K0,K1,..  |  nominal  |  twophase:Q/P@Y")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--trajectories", type=int, default=1)
    p.add_argument("--mu", default=None, help="state label/index, 'uniform', or comma list")
    p.add_argument("--csv-out", default=None, help="thinned running averages per trajectory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle-compare", parents=[common])
    p.set_defaults(func=cmd_oracle_compare)

    p = sub.add_parser("hd-s-demo", parents=[common])
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--trajectories", type=int, default=4)
    p.set_defaults(func=cmd_hd_s_demo)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        inst = load_instance(args.instance)
        return args.func(args, inst)
    except (errors.ParseError, errors.ValidationError, errors.DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (errors.MaxItersExceeded, errors.ToleranceNotMet) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (errors.PreconditionFailed, errors.TargetUnreachable, errors.OracleRefused,
            errors.ExplosionGuard, errors.UnsupportedCombination) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
