"""Config-driven scenarios built from the library modules."""
from __future__ import annotations

import math
import time

import numpy as np

from .. import channel, mac_bounds, mac_codes, su_bounds, su_codes
from ..errors import FeedbackLabError, ParameterError
from ..numerics import gaussian_capacity, gaussian_dispersion
from .config import ExperimentConfig, ResultRecord, worker_pool

DEFAULT_NS = (10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6, 10 ** 7, 10 ** 8)


def _estimate(m: channel.McEstimate) -> dict:
    return {"p_hat": m.p_hat, "se": m.se, "ci_halfwidth": m.ci_halfwidth,
            "successes": m.successes, "trials": m.trials}


def _mean(m: channel.MeanEstimate) -> dict:
    return {"mean": m.mean, "se": m.se, "trials": m.trials}


def _capacity(cfg, pool):
    snr = cfg.params["snr"]
    return {"capacity": gaussian_capacity(snr), "dispersion": gaussian_dispersion(snr)}, {}


def _su_bounds(cfg, pool):
    p = cfg.params
    ns = p.get("ns", DEFAULT_NS)
    if isinstance(ns, str):
        ns = [int(float(v)) for v in ns.split(",")]
    elif isinstance(ns, (int, float)):
        ns = [int(ns)]
    L = p.get("L", 1)
    rows = su_bounds.write_curve_csv(cfg.outputs.get("csv"), ns, p["P"], p["eps"], L)
    n0 = su_bounds.sandwich_crossover(ns, p["P"], p["eps"], L)
    return {"rows": rows, "crossover": n0, "eps_capacity": su_bounds.epsilon_capacity(p["P"], p["eps"])}, \
        {"sandwich": n0 is not None}


def _su_sk(cfg, pool):
    p = cfg.params
    code = su_codes.build_sk_code(p["n"], p["M"], p["P"])
    seed = cfg.stream_seed
    err = channel.estimate_error(code, cfg.trials, seed, executor=pool)
    power = channel.estimate_power(code, cfg.trials, seed, executor=pool)[0]
    ana = code.analytic_error()
    se = max(err.se_at(ana), 0.0)
    return {"error": _estimate(err), "analytic_error": ana, "error_bound": code.error_bound(),
            "power": _mean(power), "exact_arithmetic": code.exact}, \
        {"error_matches_analytic": abs(err.p_hat - ana) <= cfg.tolerance * se + 1e-15,
         "power_within_budget": power.mean <= p["P"] + cfg.tolerance * power.se + 1e-12}


def _stub_inner(error_prob):
    return lambda n, m, power: su_codes.ThresholdStubCode(n, m, power, error_prob)


def _su_power_control(cfg, pool):
    p = cfg.params
    inner = p.get("inner", "sk")
    if inner == "stub":
        factory = _stub_inner(p.get("stub_error", 1.0 / p["n"]))
    elif inner == "sk":
        factory = None
    else:
        raise ParameterError(f"inner must be 'sk' or 'stub', got {inner!r}")
    code, plan = su_codes.build_power_controlled_code(p["n"], p["P"], p["eps"], p.get("L", 1),
                                                      inner=factory, eps_n=p.get("eps_n"))
    seed = cfg.stream_seed
    err = channel.estimate_error(code, cfg.trials, seed, executor=pool)
    power = channel.estimate_power(code, cfg.trials, seed, executor=pool)[0]
    return {"error": _estimate(err), "power": _mean(power),
            "m_total": plan.m_total, "m_bar": plan.m_bar,
            "ln_m_total": plan.ln_m_total, "ln_m_bar": plan.ln_m_bar,
            "error_bound": plan.error_bound, "power_bound": plan.power_bound}, \
        {"error_within_target": err.p_hat <= p["eps"] + cfg.tolerance * err.se_at(p["eps"]),
         "power_within_budget": power.mean <= p["P"] + cfg.tolerance * power.se + 1e-12}


def _su_truncation(cfg, pool):
    p = cfg.params
    ing = su_bounds.converse_ingredients(p["n"], p["P"], p["eps"])
    markov = 1 - p["eps"] - ing.gamma / math.sqrt(p["n"])
    budget = p.get("budget", p["n"] * ing.q if not ing.vacuous else math.inf)
    if not math.isfinite(budget):
        raise ParameterError(f"{cfg.scenario}: converse is vacuous at n={p['n']}; give a budget")
    code = su_codes.truncate_to_peak_power(su_codes.build_sk_code(p["n"], p["M"], p["P"]), budget)

    def red(b):
        raw = b.extras["raw"]
        return {"violations": su_codes.prefix_law_violations(b.x, raw, budget),
                "exceed": int(np.sum((raw * raw).sum(axis=(1, 2)) > budget)),
                "triggered": int(np.sum(~b.extras["admitted"].all(axis=(1, 2)))),
                "errors": int(np.sum(b.errors))}

    tot = channel.collect(code, cfg.trials, cfg.stream_seed, red, executor=pool)
    exceed = channel.McEstimate.from_counts(tot["exceed"], cfg.trials, cfg.stream_seed)
    ceiling = max(markov, 0.0)
    return {"budget": budget, "markov_bound": markov, "violations": tot["violations"],
            "exceed": _estimate(exceed), "triggered": tot["triggered"],
            "error": tot["errors"] / cfg.trials}, \
        {"prefix_law": tot["violations"] == 0,
         "exceed_below_markov": exceed.p_hat <= markov + cfg.tolerance * exceed.se_at(min(ceiling, 1.0))}


def _mac_region(cfg, pool):
    p = cfg.params
    reg = mac_bounds.region(p["P1"], p["P2"], p["eps"], p.get("grid", 1001))
    rows = None
    if cfg.outputs.get("csv"):
        rows = mac_bounds.write_region_csv(cfg.outputs["csv"], reg)
    rs = mac_codes.solve_rho_star(p["P1"], p["P2"], p["eps"])
    pg = mac_bounds.pentagon(p["P1"], p["P2"], p["eps"], rs)
    return {"rows": len(reg.rho_grid) if rows is None else rows, "rho_star": rs,
            "r1_max": pg.r1_max, "r2_max": pg.r2_max, "sum_max": pg.sum_max,
            "boundary": reg.boundary}, {}


def _ozarow_run(code, trials, seed, pool):
    params = code.params

    def red(b):
        act = np.asarray(b.extras["active"], dtype=bool)
        e = b.energy
        return {"aborts": int(np.sum(~act)), "errors": int(np.sum(b.errors)),
                "cond_errors": int(np.sum(b.errors & act)),
                "e1": e[:, 0].sum(), "e2": e[:, 1].sum(),
                "q1": (e[:, 0] ** 2).sum(), "q2": (e[:, 1] ** 2).sum()}

    tot = channel.collect(code, trials, seed, red, executor=pool)
    active = trials - tot["aborts"]
    out = {
        "abort": channel.McEstimate.from_counts(tot["aborts"], trials, seed),
        "error": channel.McEstimate.from_counts(tot["errors"], trials, seed),
        "conditional_error": channel.McEstimate.from_counts(tot["cond_errors"], max(active, 1), seed),
        "abort_target": params.abort_probability,
    }
    for j in (1, 2):
        s1 = tot[f"e{j}"] / code.n
        s2 = tot[f"q{j}"] / code.n ** 2
        mean = s1 / trials
        var = max(s2 / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
        out[f"power{j}"] = channel.MeanEstimate(mean, math.sqrt(var / trials), trials, seed)
    return out


def _mac_ozarow(cfg, pool):
    p = cfg.params
    params = mac_codes.ozarow_params(p["n"], p["P1"], p["P2"], p["eps"])
    code = mac_codes.build_ozarow_code(params, p.get("M1"), p.get("M2"))
    run = _ozarow_run(code, cfg.trials, cfg.stream_seed, pool)
    tol = cfg.tolerance
    ab = run["abort"]
    metrics = {
        "abort": _estimate(ab), "abort_target": run["abort_target"],
        "error": _estimate(run["error"]), "conditional_error": _estimate(run["conditional_error"]),
        "kappa": params.kappa_n, "rho_star": params.rho_star, "rho_n_star": params.rho_n_star,
        "power1": _mean(run["power1"]), "power2": _mean(run["power2"]),
        "M1": code.message_counts[0], "M2": code.message_counts[1],
    }
    passed = {
        "abort_rate": abs(ab.p_hat - run["abort_target"]) <= tol * ab.se_at(run["abort_target"]),
        "error_within_target": run["error"].p_hat <= p["eps"] + tol * run["error"].se_at(p["eps"]),
        "power1": run["power1"].mean <= p["P1"] + tol * run["power1"].se + 1e-12,
        "power2": run["power2"].mean <= p["P2"] + tol * run["power2"].se + 1e-12,
    }
    return metrics, passed


RUNNERS = {
    "capacity": _capacity,
    "su-bounds": _su_bounds,
    "su-sk": _su_sk,
    "su-power-control": _su_power_control,
    "su-truncation": _su_truncation,
    "mac-region": _mac_region,
    "mac-ozarow": _mac_ozarow,
}


def run_experiment(config: ExperimentConfig, executor=None) -> ResultRecord:
    """Run one scenario; deterministic given the config's seed and scenario id."""
    config.validate()
    start = time.perf_counter()
    try:
        if executor is None:
            with worker_pool() as pool:
                metrics, passed = RUNNERS[config.kind](config, pool)
        else:
            metrics, passed = RUNNERS[config.kind](config, executor)
    except FeedbackLabError as exc:
        raise type(exc)(f"scenario {config.scenario!r}: {exc}") from exc
    return ResultRecord(config.scenario, dict(config.params, trials=config.trials, seed=config.seed),
                        metrics, passed, time.perf_counter() - start)
