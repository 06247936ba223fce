"""Monte Carlo experiment driver.

An experiment is a batch of independent trials of one protocol, each
seeded as (master seed, trial index), reduced to a Summary whose claims
mirror the protocols' guarantees: stationarity by the round bound,
accuracy failure rate at most the tolerated probability (plus binomial
slack so a statistically valid run never flakes), quantization levels
within the admissible budget, and decision behavior for the deciding
protocol.  Aggregation is a deterministic fold over trial index, so
serial and parallel execution produce identical summaries.
"""
from __future__ import annotations

import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Optional

import numpy as np

from . import graph as gr
from .engine import TrialConfig, TrialTrace, convergence_time, check_decision_spec, \
    default_horizon, message_bits, run_trial
from .quantization import admissible_interval, count_levels
from .sampling import ConcentrationParams, ProtocolParams, RngStream, chernoff_bound, \
    empirical_tail, min_exponential_stats, params_r, params_rbar, params_rbard
from .seeds import stable_seed


@dataclass(frozen=True)
class ExperimentConfig:
    """Template for a trial batch; JSON-serializable (schema 1).

    inputs, ell and beta may be pinned explicitly for regression or
    adversarial experiments; otherwise inputs are drawn i.i.d. uniform on
    [a, b] per trial and ell/beta come from the protocol formulas.
    """

    protocol: str
    trials: int
    n: int
    seed: int = 0
    epsilon: float = 0.3
    eta: float = 0.2
    a: float = 0.0
    b: float = 1.0
    size_bound: Optional[int] = None
    schedule_kind: str = "csc"  # csc | delayed | c_connected | blocking | ring | complete
    delay: Optional[int] = None
    c: Optional[int] = None
    s_max: int = 0
    t_max: Optional[int] = None
    inputs: Optional[tuple[float, ...]] = None
    ell: Optional[int] = None
    beta: Optional[float] = None
    slack_sigmas: float = 3.0
    schema: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.slack_sigmas < 0:
            raise ValueError("slack_sigmas must be >= 0")
        if self.protocol != "rbard" and self.s_max != 0:
            raise ValueError("staggered starts are only supported by rbard")
        if self.inputs is not None and len(self.inputs) != self.n:
            raise ValueError("fixed inputs must have length n")

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["inputs"] = None if self.inputs is None else list(self.inputs)
        return d


def experiment_from_json(obj: dict) -> ExperimentConfig:
    if obj.get("schema", 1) != 1:
        raise ValueError(f"unsupported config schema {obj.get('schema')!r}")
    kwargs = dict(obj)
    kwargs.pop("schema", None)
    if kwargs.get("inputs") is not None:
        kwargs["inputs"] = tuple(float(v) for v in kwargs["inputs"])
    return ExperimentConfig(**kwargs)


def build_params(cfg: ExperimentConfig) -> Optional[ProtocolParams]:
    if cfg.protocol == "min":
        return None
    if cfg.ell is not None:
        beta = cfg.beta
        if beta is None and cfg.protocol in ("rbar", "rbard"):
            beta = cfg.epsilon / (8.0 * (cfg.b - cfg.a + 1.0))
        return ProtocolParams(
            epsilon=cfg.epsilon, eta=cfg.eta, a=cfg.a, b=cfg.b,
            ell=cfg.ell, beta=beta, size_bound=cfg.size_bound,
        )
    if cfg.protocol == "r":
        return params_r(cfg.epsilon, cfg.eta, cfg.a, cfg.b)
    if cfg.protocol == "rbar":
        return params_rbar(cfg.epsilon, cfg.eta, cfg.a, cfg.b)
    if cfg.protocol == "rbard":
        if cfg.size_bound is None:
            raise ValueError("rbard requires size_bound")
        return params_rbard(cfg.epsilon, cfg.eta, cfg.a, cfg.b, cfg.size_bound)
    raise ValueError(f"unknown protocol {cfg.protocol!r}")


def build_schedule(cfg: ExperimentConfig, trial: int) -> gr.DynamicSchedule:
    seed = stable_seed("schedule", cfg.seed, trial)
    kind = cfg.schedule_kind
    if kind == "csc":
        return gr.schedule_csc_random(cfg.n, seed)
    if kind == "delayed":
        if cfg.delay is None:
            raise ValueError("delayed schedule requires delay")
        return gr.schedule_delayed(cfg.n, cfg.delay, seed)
    if kind == "c_connected":
        if cfg.c is None:
            raise ValueError("c_connected schedule requires c")
        return gr.schedule_c_connected(cfg.n, cfg.c, seed)
    if kind == "blocking":
        params = build_params(cfg)
        if params is None:
            raise ValueError("blocking schedule needs protocol params to pick ell")
        return gr.schedule_blocking_adversary(cfg.n, params.ell)
    if kind == "ring":
        return gr.schedule_fixed(gr.ring_graph(cfg.n))
    if kind == "complete":
        return gr.schedule_fixed(gr.complete_graph(cfg.n))
    raise ValueError(f"unknown schedule kind {kind!r}")


def trial_config(cfg: ExperimentConfig, trial: int, checkpoint_rounds: tuple[int, ...] = ()) -> TrialConfig:
    params = build_params(cfg)
    schedule = build_schedule(cfg, trial)

    if cfg.inputs is not None:
        inputs = cfg.inputs
    else:
        us = RngStream(cfg.seed, trial=trial, agent=0, purpose="inputs").uniforms(cfg.n)
        inputs = tuple(float(cfg.a + (cfg.b - cfg.a) * u) for u in us)

    if cfg.protocol == "rbard" and cfg.s_max > 0:
        st = RngStream(cfg.seed, trial=trial, agent=0, purpose="starts")
        starts = [1 + int(u * (cfg.s_max + 1)) for u in st.uniforms(cfg.n)]
        starts = [min(s, cfg.s_max + 1) for s in starts]
        # Pin one agent to the last start so s_max is exact, not just a cap.
        starts[int(st.uniform() * cfg.n) % cfg.n] = cfg.s_max + 1
        start_rounds = tuple(starts)
    else:
        start_rounds = (1,) * cfg.n

    s_max = max(start_rounds) - 1
    t_max = cfg.t_max if cfg.t_max is not None else default_horizon(
        cfg.protocol, schedule, params, s_max
    )
    return TrialConfig(
        protocol=cfg.protocol,
        params=params,
        inputs=inputs,
        schedule=schedule,
        start_rounds=start_rounds,
        t_max=t_max,
        seed=cfg.seed,
        trial=trial,
        checkpoint_rounds=checkpoint_rounds,
    )


# ---------------------------------------------------------------------------
# per-trial evaluation


def stationary_bound(cfg: ExperimentConfig, params: Optional[ProtocolParams]) -> Optional[int]:
    """Round by which vectors must be globally agreed, or None when the
    schedule gives no such guarantee (blocking, delayed + entry rotation)."""
    n = cfg.n
    kind = cfg.schedule_kind
    if kind == "blocking":
        return None
    if cfg.protocol in ("min", "r"):
        if kind == "delayed":
            return cfg.delay * max(1, n - 1)
        if kind == "c_connected":
            return math.ceil(n / cfg.c)
        return max(1, n - 1)  # csc, ring, complete
    if cfg.protocol == "rbar":
        if kind == "delayed":
            return None
        return params.ell * n
    return None  # rbard: decision bound handled separately


def offline_minima(trace: TrialTrace) -> tuple[np.ndarray, np.ndarray]:
    """Entrywise minima over all agents' initial vectors: the values every
    stationary run must hold."""
    if trace.init_x_quant is not None:
        return trace.init_x_quant.min(axis=0), trace.init_y_quant.min(axis=0)
    return trace.init_x_raw.min(axis=0), trace.init_y_raw.min(axis=0)


def _vectors_stationary(trace: TrialTrace) -> bool:
    min_x, min_y = offline_minima(trace)
    return all(
        np.array_equal(s.x_vec, min_x) and np.array_equal(s.y_vec, min_y)
        for s in trace.final_states
    )


def _estimates_settled(trace: TrialTrace, bound: int) -> bool:
    """All estimates bit-identical across agents and constant from the
    bound round to the horizon."""
    if bound > trace.t_max:
        return False
    tail = trace.estimates[bound - 1 :]
    ref = tail[0, 0]
    return bool(not math.isnan(ref) and (tail == ref).all())


def evaluate_trial(cfg: ExperimentConfig, trace: TrialTrace) -> dict:
    """Reduce one trace to the flat JSON record the summary fold consumes."""
    params = trace.params
    rec: dict = {
        "trial": 0,  # overwritten by run_one
        "theta": trace.theta,
        "final_estimate": None,
        "converged_at": convergence_time(trace, cfg.epsilon) if params else None,
    }

    last = trace.estimates[-1]
    if not math.isnan(last[0]):
        rec["final_estimate"] = float(last[0])

    bound = stationary_bound(cfg, params)
    rec["stationary_bound"] = bound
    if bound is not None:
        if cfg.protocol == "min":
            tail = trace.estimates[bound - 1 :]
            rec["stationary_ok"] = bool((tail == min(trace.inputs)).all())
        else:
            rec["stationary_ok"] = bool(
                _estimates_settled(trace, bound) and _vectors_stationary(trace)
            )
    else:
        rec["stationary_ok"] = None

    if params is not None and cfg.protocol != "min":
        est = last[0]
        rec["accurate"] = bool(
            not math.isnan(est) and abs(est - trace.theta) <= cfg.epsilon
        )

    if cfg.protocol in ("rbar", "rbard"):
        z, upper = admissible_interval(params.eta, params.ell, trace.n, params.a, params.b)
        raw = np.concatenate([trace.init_x_raw.ravel(), trace.init_y_raw.ravel()])
        rec["samples_in_interval"] = bool(((raw >= z) & (raw <= upper)).all())
        report = message_bits(trace)
        rec["distinct_exponents"] = report.distinct_exponents
        rec["level_budget"] = count_levels(z, upper, params.beta)
        rec["levels_ok"] = bool(
            rec["samples_in_interval"] and report.distinct_exponents <= rec["level_budget"]
        )
        rec["max_message_bits"] = int(report.per_message_max)

    if cfg.protocol == "rbard":
        dr = check_decision_spec(trace, cfg.epsilon)
        decision_bound = trace.s_max + 2 * trace.n
        rounds = trace.decision_rounds
        rec["decision_bound"] = decision_bound
        rec["irrevocable"] = dr.irrevocability
        rec["all_decided_by_bound"] = bool(
            (rounds > 0).all() and (rounds <= decision_bound).all()
        )
        finals = trace.decisions[-1]
        rec["decisions_identical"] = bool(
            dr.termination and (finals == finals[0]).all()
        )
        rec["decisions_valid"] = dr.validity and dr.termination
        min_x, min_y = offline_minima(trace)
        rec["decided_when_stationary"] = bool(
            (rounds > 0).all()
            and all(
                np.array_equal(xv, min_x) and np.array_equal(yv, min_y)
                for xv, yv in trace.decision_vectors.values()
            )
        )
        rec["decision_good"] = bool(
            rec["all_decided_by_bound"]
            and rec["decisions_identical"]
            and rec["decisions_valid"]
            and rec["decided_when_stationary"]
        )
        rec["last_decision_round"] = dr.last_decision_round

    return rec


def run_one(cfg: ExperimentConfig, trial: int) -> dict:
    trace = run_trial(trial_config(cfg, trial))
    rec = evaluate_trial(cfg, trace)
    rec["trial"] = trial
    return rec


# ---------------------------------------------------------------------------
# summary fold


@dataclass
class Summary:
    """Aggregated verdicts of a batch; reproducible from the trial records."""

    protocol: str
    trials: int
    failure_fraction: Optional[float] = None
    mean_convergence_round: Optional[float] = None
    max_convergence_round: Optional[int] = None
    decision_rounds: Optional[dict] = None
    max_distinct_exponents: Optional[int] = None
    max_message_bits: Optional[int] = None
    claims: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    schema: int = 1

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.claims.values())

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summary_from_json(obj: dict) -> Summary:
    kwargs = {k: obj[k] for k in Summary.__dataclass_fields__ if k in obj}
    return Summary(**kwargs)


def _claim(observed: float, bound: float, op: str) -> dict:
    passed = observed <= bound if op == "<=" else observed >= bound
    return {"observed": observed, "bound": bound, "op": op, "passed": bool(passed)}


def _slack(p: float, trials: int, sigmas: float) -> float:
    return sigmas * math.sqrt(p * (1.0 - p) / trials)


def summary_from_records(cfg: ExperimentConfig, records: list[dict]) -> Summary:
    trials = len(records)
    s = Summary(protocol=cfg.protocol, trials=trials, config=cfg.to_json())

    conv = [r["converged_at"] for r in records if r.get("converged_at") is not None]
    if conv:
        s.mean_convergence_round = float(np.mean(conv))
        s.max_convergence_round = int(max(conv))

    if any(r.get("stationary_ok") is not None for r in records):
        frac = np.mean([bool(r["stationary_ok"]) for r in records])
        s.claims["stationary_by_bound"] = _claim(float(frac), 1.0, ">=")

    if cfg.protocol in ("r", "rbar"):
        failures = np.mean([not r["accurate"] for r in records])
        s.failure_fraction = float(failures)
        p = cfg.eta if cfg.protocol == "r" else cfg.eta / 2.0
        s.claims["accuracy_failure_rate"] = _claim(
            s.failure_fraction, p + _slack(p, trials, cfg.slack_sigmas), "<="
        )

    if cfg.protocol in ("rbar", "rbard"):
        s.max_distinct_exponents = max(r["distinct_exponents"] for r in records)
        s.max_message_bits = max(r["max_message_bits"] for r in records)

    if cfg.protocol == "rbar":
        ok = np.mean([r["levels_ok"] for r in records])
        p = cfg.eta / 2.0
        s.claims["quantization_levels"] = _claim(
            float(ok), 1.0 - p - _slack(p, trials, cfg.slack_sigmas), ">="
        )

    if cfg.protocol == "rbard":
        irrev = np.mean([r["irrevocable"] for r in records])
        s.claims["irrevocability"] = _claim(float(irrev), 1.0, ">=")
        good = np.mean([r["decision_good"] for r in records])
        p = cfg.eta
        s.claims["decision_good_rate"] = _claim(
            float(good), 1.0 - p - _slack(p, trials, cfg.slack_sigmas), ">="
        )
        rounds = [r["last_decision_round"] for r in records if r["last_decision_round"]]
        if rounds:
            s.decision_rounds = {
                "min": int(min(rounds)),
                "mean": float(np.mean(rounds)),
                "max": int(max(rounds)),
            }
    return s


def monte_carlo(
    cfg: ExperimentConfig,
    records_path: Optional[Path] = None,
    summary_path: Optional[Path] = None,
    jobs: int = 1,
) -> Summary:
    """Run the batch, fold the records in trial order, optionally persist
    both.  jobs > 1 runs trials in worker processes; the fold is the same
    either way, so the summary is too."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_one, repeat(cfg), range(cfg.trials)))
    else:
        records = [run_one(cfg, i) for i in range(cfg.trials)]

    summary = summary_from_records(cfg, records)
    if records_path is not None:
        with open(records_path, "w") as fp:
            for rec in records:
                fp.write(json.dumps(rec) + "\n")
    if summary_path is not None:
        with open(summary_path, "w") as fp:
            json.dump(summary.to_json(), fp, indent=2)
            fp.write("\n")
    return summary


def render_csv(summary: Summary) -> str:
    """Fixed-column CSV: section,name,observed,bound,passed."""
    lines = ["section,name,observed,bound,passed"]
    stats = {
        "trials": summary.trials,
        "failure_fraction": summary.failure_fraction,
        "mean_convergence_round": summary.mean_convergence_round,
        "max_convergence_round": summary.max_convergence_round,
        "max_distinct_exponents": summary.max_distinct_exponents,
        "max_message_bits": summary.max_message_bits,
    }
    if summary.decision_rounds:
        for k, v in summary.decision_rounds.items():
            stats[f"decision_round_{k}"] = v
    for name, value in stats.items():
        if value is not None:
            lines.append(f"stat,{name},{value},,")
    for name, c in summary.claims.items():
        lines.append(f"claim,{name},{c['observed']},{c['bound']},{c['passed']}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# property suites shared by the CLI and the acceptance tests


@dataclass(frozen=True)
class ClaimResult:
    name: str
    passed: bool
    detail: str


def verify_graph_claims(seed: int = 0, product_cases: int = 500, c_cases: int = 200) -> list[ClaimResult]:
    """Empirical checks of the graph-product facts the protocols rest on."""
    results = []
    rng = random.Random(stable_seed("verify-graph", seed))

    # Product of n-1 strongly connected self-looped graphs is complete.
    bad = 0
    for _ in range(product_cases):
        n = rng.randint(2, 5)
        g = gr.random_strongly_connected(n, rng)
        for _ in range(n - 2):
            g = gr.product(g, gr.random_strongly_connected(n, rng))
        bad += not gr.is_complete(g)
    results.append(
        ClaimResult(
            "product_of_n_minus_1_complete",
            bad == 0,
            f"{product_cases - bad}/{product_cases} complete (n in 2..5)",
        )
    )

    # Product of ceil(n/c) c-in-connected graphs is complete.
    bad = 0
    total = 0
    for n in range(2, 7):
        for c in (1, 2, 3):
            for _ in range(c_cases):
                total += 1
                g = gr.random_c_in_connected(n, c, rng)
                for _ in range(math.ceil(n / c) - 1):
                    g = gr.product(g, gr.random_c_in_connected(n, c, rng))
                bad += not gr.is_complete(g)
    results.append(
        ClaimResult(
            "c_in_connected_speedup",
            bad == 0,
            f"{total - bad}/{total} complete (n in 2..6, c in 1..3)",
        )
    )

    # Associativity of the product on random triples.
    bad = 0
    for _ in range(200):
        n = rng.randint(2, 5)
        g, h, k = (gr.random_strongly_connected(n, rng) for _ in range(3))
        bad += gr.product(gr.product(g, h), k) != gr.product(g, gr.product(h, k))
    results.append(ClaimResult("product_associative", bad == 0, f"{200 - bad}/200 triples"))

    # Every schedule generator's output keeps all self-loops.
    bad = 0
    schedules = [
        gr.schedule_csc_random(5, seed),
        gr.schedule_delayed(5, 3, seed),
        gr.schedule_c_connected(5, 2, seed),
        gr.schedule_blocking_adversary(5, 4),
        gr.schedule_fixed(gr.ring_graph(5)),
    ]
    for sched in schedules:
        for t in range(1, 31):
            g = sched.graph_at(t)
            bad += not all((u, u) in g.edges for u in range(g.n))
    results.append(ClaimResult("schedules_keep_self_loops", bad == 0, "5 kinds x 30 rounds"))
    return results


def verify_bound_claims(seed: int = 0, reps: int = 10_000, sigmas: float = 3.0) -> list[ClaimResult]:
    """Empirical checks of the concentration facts behind the parameters."""
    results = []

    # Minimum of independent exponentials: rate adds up.
    rates = [1.0, 2.0, 3.0, 4.0, 5.0]
    total = sum(rates)
    stream = RngStream(seed, purpose="verify-min")
    mean, surv = min_exponential_stats(rates, [0.02, 0.05, 0.1], 100_000, stream)
    mean_ok = abs(mean - 1.0 / total) <= 0.01 / total
    surv_ok = all(
        abs(f - math.exp(-total * x)) <= 0.01 for f, x in zip(surv, [0.02, 0.05, 0.1])
    )
    results.append(
        ClaimResult(
            "min_of_exponentials",
            mean_ok and surv_ok,
            f"mean={mean:.6f} (expect {1 / total:.6f}), survival gaps within 0.01",
        )
    )

    # Mean deviation bound, plain and rounded.
    for ell, alpha in ((50, 0.1), (100, 0.2), (300, 0.1)):
        for rate in (1.0, 3.0):
            for beta in (None, 0.1):
                cp = ConcentrationParams(ell=ell, rate=rate, alpha=alpha, beta=beta)
                stream = RngStream(seed, purpose=f"verify-tail-{ell}-{alpha}-{rate}-{beta}")
                freq = empirical_tail(cp, reps, stream)
                bound = chernoff_bound(ell, alpha)
                capped = min(bound, 1.0)
                limit = bound + sigmas * math.sqrt(capped * (1.0 - capped) / reps)
                tag = "rounded" if beta else "plain"
                results.append(
                    ClaimResult(
                        f"tail_l{ell}_a{alpha}_r{rate:g}_{tag}",
                        freq <= limit,
                        f"freq={freq:.4f} <= bound {bound:.4f} + slack",
                    )
                )
    return results
