"""Command line entry point."""
from __future__ import annotations

import argparse
import json
import sys

from .. import channel, mac_bounds, mac_codes, su_codes
from ..errors import FeedbackLabError
from ..numerics import gaussian_capacity, gaussian_dispersion
from . import acceptance
from .config import ExperimentConfig, ResultRecord, parse_assignments, to_jsonable
from .experiments import DEFAULT_NS, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SU_CSV = "CSV columns: n, lower, upper, lower_per_n, upper_per_n, eps_capacity (blank where undefined)."
REGION_CSV = ("Region CSV columns: rho, r1_max, r2_max, sum_max (grid rows plus rho*). "
              "Boundary CSV columns: r1, r2.")
TRANSCRIPT_CSV = "Transcript CSV columns: trial, k (1-based), x1, x2, z, y."


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, human: str, payload: dict):
    if args.json:
        print(json.dumps(to_jsonable(payload), indent=2, sort_keys=True))
    else:
        print(human)


def _csv_list(text):
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_capacity(args):
    c, v = gaussian_capacity(args.snr), gaussian_dispersion(args.snr)
    _emit(args, f"{c:.6f}\ndispersion {v:.6f}", {"snr": args.snr, "capacity": c, "dispersion": v})
    return EXIT_OK


def _config_from(args, kind, flag_map):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data.update(parse_assignments(fh))
    data["kind"] = kind
    for flag, key in flag_map.items():
        val = getattr(args, flag)
        if val is not None:
            data[key] = val
    data.update(parse_assignments(args.set or ()))
    data.setdefault("scenario", kind)
    return ExperimentConfig.from_mapping(data)


def _record_output(args, rec: ResultRecord, human_lines):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(rec.to_json())
    _emit(args, "\n".join(human_lines), rec.to_dict())
    return EXIT_OK if rec.ok else EXIT_FAIL


def cmd_bounds_su(args):
    cfg = ExperimentConfig.from_mapping({"kind": "su-bounds", "scenario": "bounds-su", "P": args.P,
                                         "eps": args.eps, "L": args.L, "ns": ",".join(map(str, args.ns)),
                                         **({"csv": args.out} if args.out else {})})
    rec = run_experiment(cfg)
    lines = [f"{'n':>12} {'lower/n':>12} {'upper/n':>12}"]
    for r in rec.metrics["rows"]:
        lines.append(f"{r['n']:>12} {r['lower_per_n']:>12.6f} {r['upper_per_n']:>12.6f}")
    lines.append(f"eps-capacity {rec.metrics['eps_capacity']:.6f}  ordered from n={rec.metrics['crossover']}")
    _emit(args, "\n".join(lines), rec.to_dict())
    return EXIT_OK


_SU_FLAGS = {"n": "n", "M": "M", "P": "P", "eps": "eps", "L": "L", "trials": "trials", "seed": "seed",
             "inner": "inner", "stub_error": "stub_error", "budget": "budget"}


def cmd_simulate_su(args):
    kind = {"sk": "su-sk", "power-control": "su-power-control", "truncation": "su-truncation"}[args.mode]
    cfg = _config_from(args, kind, _SU_FLAGS)
    rec = run_experiment(cfg)
    m = rec.metrics
    lines = [f"scenario {cfg.scenario} ({cfg.kind}), trials {cfg.trials}, seed {cfg.seed}"]
    if "error" in m and isinstance(m["error"], dict):
        lines.append(f"error {m['error']['p_hat']:.6g} +/- {m['error']['ci_halfwidth']:.2g}")
    if "power" in m:
        lines.append(f"power {m['power']['mean']:.6f} (se {m['power']['se']:.2g})")
    if kind == "su-truncation":
        lines.append(f"prefix-law violations {m['violations']}, exceed {m['exceed']['p_hat']:.6g}"
                     f" (Markov ceiling {m['markov_bound']:.4f})")
    lines += [f"{k}: {'pass' if v else 'FAIL'}" for k, v in rec.passed.items()]
    if args.transcripts:
        code = _su_code_for(cfg)
        b = channel.simulate_batch(code, cfg.stream_seed, range(args.transcript_count))
        channel.dump_transcripts_csv(args.transcripts, [b])
    return _record_output(args, rec, lines)


def _su_code_for(cfg):
    p = cfg.params
    if cfg.kind == "su-sk":
        return su_codes.build_sk_code(p["n"], p["M"], p["P"])
    if cfg.kind == "su-power-control":
        inner = None
        if p.get("inner") == "stub":
            err = p.get("stub_error", 1.0 / p["n"])
            inner = lambda n, m, pw: su_codes.ThresholdStubCode(n, m, pw, err)
        return su_codes.build_power_controlled_code(p["n"], p["P"], p["eps"], p.get("L", 1), inner)[0]
    rec = run_experiment(ExperimentConfig(cfg.scenario, cfg.kind, cfg.params, 1, cfg.seed))
    return su_codes.truncate_to_peak_power(su_codes.build_sk_code(p["n"], p["M"], p["P"]), rec.metrics["budget"])


def cmd_region_mac(args):
    reg = mac_bounds.region(args.p1, args.p2, args.eps, args.grid)
    if args.out:
        mac_bounds.write_region_csv(args.out, reg)
    if args.boundary_out:
        mac_bounds.write_boundary_csv(args.boundary_out, reg)
    rs = mac_codes.solve_rho_star(args.p1, args.p2, args.eps)
    pg = mac_bounds.pentagon(args.p1, args.p2, args.eps, rs)
    payload = {"rows": len(reg.rho_grid), "rho_star": rs, "r1_max": pg.r1_max, "r2_max": pg.r2_max,
               "sum_max": pg.sum_max, "boundary_points": len(reg.boundary)}
    human = (f"rows {len(reg.rho_grid)}  rho* {rs:.9f}\n"
             f"at rho*: r1 {pg.r1_max:.6f}  r2 {pg.r2_max:.6f}  sum {pg.sum_max:.6f}")
    _emit(args, human, payload)
    return EXIT_OK


_MAC_FLAGS = {"n": "n", "p1": "P1", "p2": "P2", "eps": "eps", "trials": "trials", "seed": "seed",
              "M1": "M1", "M2": "M2"}


def cmd_simulate_mac(args):
    cfg = _config_from(args, "mac-ozarow", _MAC_FLAGS)
    rec = run_experiment(cfg)
    m = rec.metrics
    lines = [f"scenario {cfg.scenario}, trials {cfg.trials}, seed {cfg.seed}",
             f"abort {m['abort']['p_hat']:.4f} (target {m['abort_target']:.4f})",
             f"joint error {m['error']['p_hat']:.4f}, given no abort {m['conditional_error']['p_hat']:.3g}",
             f"powers {m['power1']['mean']:.4f} {m['power2']['mean']:.4f}",
             f"rho* {m['rho_star']:.6f}  rho_n* {m['rho_n_star']:.6f}  kappa {m['kappa']:.3g}"]
    lines += [f"{k}: {'pass' if v else 'FAIL'}" for k, v in rec.passed.items()]
    return _record_output(args, rec, lines)


def _suite_output(args, results, seed):
    payload = {"seed": seed, "passed": all(r.passed for r in results),
               "criteria": [to_jsonable(r) for r in results]}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK if payload["passed"] else EXIT_FAIL


def cmd_verify_lemmas(args):
    with acceptance.worker_pool() as pool:
        res = acceptance.lemma_suite(args.seed, pool, trials=args.trials)
    if not args.json:
        for k, v in res.checks.items():
            print(f"{k}: {'pass' if v else 'FAIL'}")
    return _suite_output(args, [res], args.seed)


def cmd_accept(args):
    report = None if args.json else (lambda r: print(r.line(), flush=True))
    results = acceptance.run_suite(args.seed, only=args.only, report=report)
    if not args.json:
        ok = sum(r.passed for r in results)
        print(f"{ok}/{len(results)} criteria passed")
    return _suite_output(args, results, args.seed)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="feedbacklab", description="Feedback coding experiments for Gaussian channels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, epilog=None):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog)
        sp.add_argument("--json", action="store_true", help="print machine-readable JSON")
        return sp

    sp = add("capacity", "Gaussian capacity and dispersion at an SNR")
    sp.add_argument("--snr", type=float, required=True)
    sp.set_defaults(func=cmd_capacity)

    sp = add("bounds-su", "single-user lower and upper log-size curves", SU_CSV)
    sp.add_argument("--P", "--power", dest="P", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--L", type=int, default=1)
    sp.add_argument("--ns", type=_csv_list, default=list(DEFAULT_NS), help="comma-separated blocklengths")
    sp.add_argument("--out", help="curve CSV path")
    sp.set_defaults(func=cmd_bounds_su)

    sp = add("simulate-su", "Monte-Carlo run of a single-user feedback code", TRANSCRIPT_CSV)
    sp.add_argument("--mode", choices=("sk", "power-control", "truncation"), default="sk")
    sp.add_argument("--n", type=int)
    sp.add_argument("--M", type=int)
    sp.add_argument("--P", "--power", dest="P", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--L", type=int)
    sp.add_argument("--inner", choices=("sk", "stub"))
    sp.add_argument("--stub-error", dest="stub_error", type=float)
    sp.add_argument("--budget", type=float)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="key = value config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    sp.add_argument("--out", help="result JSON path")
    sp.add_argument("--transcripts", help="CSV path for the first transcripts")
    sp.add_argument("--transcript-count", dest="transcript_count", type=int, default=10)
    sp.set_defaults(func=cmd_simulate_su)

    sp = add("region-mac", "feedback MAC rate region over a correlation grid", REGION_CSV)
    sp.add_argument("--p1", type=float, required=True)
    sp.add_argument("--p2", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--grid", type=int, default=1001)
    sp.add_argument("--out", help="region CSV path")
    sp.add_argument("--boundary-out", dest="boundary_out", help="boundary CSV path")
    sp.set_defaults(func=cmd_region_mac)

    sp = add("simulate-mac", "Monte-Carlo run of the two-user code with abort coin")
    sp.add_argument("--n", type=int)
    sp.add_argument("--p1", type=float)
    sp.add_argument("--p2", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--M1", type=int)
    sp.add_argument("--M2", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--out", help="result JSON path")
    sp.set_defaults(func=cmd_simulate_mac)

    sp = add("verify-lemmas", "MAC converse lemma checks")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--out", help="result JSON path")
    sp.set_defaults(func=cmd_verify_lemmas)

    sp = add("accept", "run the acceptance suite")
    sp.add_argument("--suite", choices=("primary",), default="primary")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--only", type=_csv_list, help="comma-separated criterion numbers")
    sp.add_argument("--out", help="result JSON path")
    sp.set_defaults(func=cmd_accept)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "only", None):
        bad = [c for c in args.only if c not in acceptance.CRITERIA]
        if bad:
            parser.error(f"unknown criteria {bad}")
    try:
        return args.func(args)
    except FeedbackLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
