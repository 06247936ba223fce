"""Round-based execution of one trial, and checks over the recorded trace.

A round is communication closed: every agent emits its outbox message,
agent v receives the message of u exactly when the edge (u, v) is in the
round's graph (so every agent hears itself), and then every agent applies
its transition.  Snapshots follow the end-of-round convention: row t-1 of
every per-round array reflects the state at the *end* of round t.

The schedule is a pure function of its own seed, never of the protocol
seed, so the topology cannot react to the agents' random choices.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from . import protocol as proto
from .graph import DynamicSchedule
from .sampling import ProtocolParams, RngStream

PROTOCOLS = ("min", "r", "rbar", "rbard")

_OUTBOX = {
    "min": proto.min_outbox,
    "r": proto.r_outbox,
    "rbar": proto.rbar_outbox,
    "rbard": proto.rbard_outbox,
}
_APPLY = {
    "min": proto.min_apply,
    "r": proto.r_apply,
    "rbar": proto.rbar_apply,
    "rbard": proto.rbard_apply,
}


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial depends on; traces are pure functions of this.

    start_rounds stagger activation for the deciding protocol: agent u is
    passive (emitting heartbeats) strictly before round start_rounds[u].
    The other protocols require all-1 start rounds.  checkpoint_rounds
    lists rounds at which full vector snapshots are kept in the trace.
    """

    protocol: str
    params: Optional[ProtocolParams]
    inputs: tuple[float, ...]
    schedule: DynamicSchedule
    start_rounds: tuple[int, ...]
    t_max: int
    seed: int
    trial: int = 0
    checkpoint_rounds: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        n = self.schedule.n
        if len(self.inputs) != n or len(self.start_rounds) != n:
            raise ValueError(
                f"inputs ({len(self.inputs)}) and start_rounds ({len(self.start_rounds)}) "
                f"must match schedule.n ({n})"
            )
        if self.protocol != "min" and self.params is None:
            raise ValueError(f"protocol {self.protocol!r} requires params")
        if any(s < 1 for s in self.start_rounds):
            raise ValueError("start rounds must be >= 1")
        if self.protocol != "rbard" and any(s != 1 for s in self.start_rounds):
            raise ValueError(f"protocol {self.protocol!r} requires synchronous starts")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")

    @property
    def n(self) -> int:
        return self.schedule.n

    @property
    def s_max(self) -> int:
        """Last round in which some agent is still passive."""
        return max(self.start_rounds) - 1

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol,
            "params": None if self.params is None else self.params.to_json(),
            "inputs": list(self.inputs),
            "schedule": self.schedule.to_json(),
            "start_rounds": list(self.start_rounds),
            "t_max": self.t_max,
            "seed": self.seed,
            "trial": self.trial,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def default_horizon(protocol: str, schedule: DynamicSchedule, params: Optional[ProtocolParams],
                    s_max: int = 0) -> int:
    """4x the expected convergence/decision bound, so a non-converging run
    is distinguishable from a slow one."""
    n = schedule.n
    if schedule.kind == "delayed":
        sweep = schedule.delay * max(1, n - 1)
    elif schedule.kind == "c_connected":
        sweep = math.ceil(n / schedule.c)
    else:
        sweep = max(1, n - 1)
    if protocol in ("min", "r"):
        bound = sweep
    elif protocol == "rbar":
        bound = params.ell * n
    else:
        bound = s_max + 2 * n
    return 4 * max(1, bound)


@dataclass(eq=False)
class TrialTrace:
    """Per-round record of one trial plus enough metadata to audit it.

    estimates[t-1, u] is agent u's estimate at the end of round t (NaN
    while unset); decisions and counters likewise, for the deciding
    protocol only.  init_* arrays hold every agent's generated samples
    (raw, and quantized where applicable), which pin down the offline
    entrywise minima that a stationary run must reach.
    """

    protocol: str
    n: int
    t_max: int
    params: Optional[ProtocolParams]
    inputs: tuple[float, ...]
    start_rounds: tuple[int, ...]
    theta: float
    shifted_sum: Optional[float]
    config_digest: str
    estimates: np.ndarray
    decisions: Optional[np.ndarray] = None
    counters: Optional[np.ndarray] = None
    init_x_raw: Optional[np.ndarray] = None
    init_y_raw: Optional[np.ndarray] = None
    init_x_quant: Optional[np.ndarray] = None
    init_y_quant: Optional[np.ndarray] = None
    final_states: list = field(default_factory=list)
    decision_rounds: Optional[np.ndarray] = None
    decision_vectors: dict = field(default_factory=dict)
    checkpoints: dict = field(default_factory=dict)

    @property
    def s_max(self) -> int:
        return max(self.start_rounds) - 1


def run_trial(cfg: TrialConfig) -> TrialTrace:
    n = cfg.n
    t_max = cfg.t_max
    states = _init_states(cfg)
    trace = _new_trace(cfg, states)

    outbox = _OUTBOX[cfg.protocol]
    apply = _APPLY[cfg.protocol]
    rbard = cfg.protocol == "rbard"
    checkpoint_rounds = set(cfg.checkpoint_rounds)
    estimates = trace.estimates
    decisions = trace.decisions
    counters = trace.counters

    for t in range(1, t_max + 1):
        g = cfg.schedule.graph_at(t)
        if g.n != n:
            raise ValueError(f"schedule produced a graph on {g.n} nodes, expected {n}")
        outs = [outbox(s) for s in states]
        in_lists = g.in_neighbor_lists
        states = [apply(states[v], [outs[u] for u in in_lists[v]]) for v in range(n)]

        row = estimates[t - 1]
        for v, s in enumerate(states):
            e = proto.estimate(s)
            row[v] = math.nan if e is None else e
        if rbard:
            for v, s in enumerate(states):
                decisions[t - 1, v] = math.nan if s.d is None else s.d
                counters[t - 1, v] = s.counter
                if s.d is not None and trace.decision_rounds[v] < 0:
                    trace.decision_rounds[v] = t
                    trace.decision_vectors[v] = (s.x_vec.copy(), s.y_vec.copy())
        if t in checkpoint_rounds:
            trace.checkpoints[t] = [(s.x_vec.copy(), s.y_vec.copy()) for s in states]

    trace.final_states = states
    return trace


def _init_states(cfg: TrialConfig) -> list:
    states = []
    for u, theta in enumerate(cfg.inputs):
        stream = RngStream(cfg.seed, trial=cfg.trial, agent=u, purpose="init")
        if cfg.protocol == "min":
            states.append(proto.min_init(theta))
        elif cfg.protocol == "r":
            states.append(proto.r_init(theta, cfg.params, stream))
        elif cfg.protocol == "rbar":
            states.append(proto.rbar_init(theta, cfg.params, stream))
        else:
            states.append(proto.rbard_init(theta, cfg.params, stream, cfg.start_rounds[u]))
    return states


def _new_trace(cfg: TrialConfig, states: list) -> TrialTrace:
    n, t_max = cfg.n, cfg.t_max
    theta = float(np.mean(cfg.inputs))
    shifted_sum = None
    if cfg.params is not None:
        shifted_sum = float(sum(x - cfg.params.a + 1.0 for x in cfg.inputs))

    trace = TrialTrace(
        protocol=cfg.protocol,
        n=n,
        t_max=t_max,
        params=cfg.params,
        inputs=cfg.inputs,
        start_rounds=cfg.start_rounds,
        theta=theta,
        shifted_sum=shifted_sum,
        config_digest=cfg.digest(),
        estimates=np.full((t_max, n), np.nan),
    )
    if cfg.protocol == "rbard":
        trace.decisions = np.full((t_max, n), np.nan)
        trace.counters = np.zeros((t_max, n), dtype=np.int64)
        trace.decision_rounds = np.full(n, -1, dtype=np.int64)
    if cfg.protocol == "r":
        trace.init_x_raw = np.stack([s.x_vec for s in states])
        trace.init_y_raw = np.stack([s.y_vec for s in states])
    elif cfg.protocol in ("rbar", "rbard"):
        # Re-derive the raw draws from equal streams: keyed determinism
        # makes this an exact replay of what the initializers sampled.
        raw_x, raw_y = [], []
        for u, theta_u in enumerate(cfg.inputs):
            stream = RngStream(cfg.seed, trial=cfg.trial, agent=u, purpose="init")
            xr, yr = proto.init_samples(theta_u, cfg.params, stream)
            raw_x.append(xr)
            raw_y.append(yr)
        trace.init_x_raw = np.stack(raw_x)
        trace.init_y_raw = np.stack(raw_y)
        trace.init_x_quant = np.stack([s.x_vec for s in states])
        trace.init_y_quant = np.stack([s.y_vec for s in states])
    return trace


def convergence_time(trace: TrialTrace, epsilon: float) -> Optional[int]:
    """Smallest round t* with every estimate inside [theta +- epsilon] in
    every round from t* to the horizon; None if the horizon ends outside."""
    inside = np.abs(trace.estimates - trace.theta) <= epsilon  # NaN compares False
    ok = inside.all(axis=1)
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return 1 if len(bad) == 0 else int(bad[-1]) + 2


@dataclass(frozen=True)
class DecisionReport:
    termination: bool
    irrevocability: bool
    validity: bool
    last_decision_round: Optional[int]


def check_decision_spec(trace: TrialTrace, epsilon: float) -> DecisionReport:
    """Literal evaluation of the three decision predicates over a trace:
    every agent eventually decides (within the horizon), a written
    decision is never changed or erased, and every written decision lies
    within epsilon of the true average."""
    d = trace.decisions
    if d is None:
        raise ValueError("decision checks require a deciding-protocol trace")
    set_mask = ~np.isnan(d)

    termination = bool(set_mask[-1].all())

    irrevocability = True
    for u in range(trace.n):
        rows = np.flatnonzero(set_mask[:, u])
        if len(rows) == 0:
            continue
        first = rows[0]
        tail = d[first:, u]
        if np.isnan(tail).any() or not (tail == d[first, u]).all():
            irrevocability = False
            break

    written = d[set_mask]
    validity = bool((np.abs(written - trace.theta) <= epsilon).all())

    first_rounds = [int(np.flatnonzero(set_mask[:, u])[0]) + 1
                    for u in range(trace.n) if set_mask[:, u].any()]
    last_decision_round = max(first_rounds) if first_rounds else None

    return DecisionReport(termination, irrevocability, validity, last_decision_round)


@dataclass(frozen=True)
class MessageBitsReport:
    """Bit accounting for every message sent in a trial.

    The rule is post hoc and global: a quantized entry costs the width in
    bits of the closed integer range covering every exponent observed in
    the trial, a counter costs ceil(log2(C_max + 1)), a real costs 64,
    and a heartbeat costs 1.  per_round[t-1] totals all n messages of
    round t; counter_suppressed_per_round accounts the variant where an
    agent stops sending its counter once it has decided.
    """

    per_round: np.ndarray
    per_message_max: int
    distinct_exponents: Optional[int]
    exponent_range: Optional[tuple[int, int]]
    counter_suppressed_per_round: Optional[np.ndarray] = None


def _range_width_bits(lo: int, hi: int) -> int:
    return math.ceil(math.log2(hi - lo + 1)) if hi > lo else 0


def message_bits(trace: TrialTrace) -> MessageBitsReport:
    n, t_max = trace.n, trace.t_max

    if trace.protocol == "min":
        per_round = np.full(t_max, 64 * n, dtype=np.int64)
        return MessageBitsReport(per_round, 64, None, None)

    if trace.protocol == "r":
        per_msg = 2 * trace.params.ell * 64
        return MessageBitsReport(np.full(t_max, per_msg * n, dtype=np.int64), per_msg, None, None)

    exponents = np.concatenate([trace.init_x_quant.ravel(), trace.init_y_quant.ravel()])
    lo, hi = int(exponents.min()), int(exponents.max())
    entry_bits = _range_width_bits(lo, hi)
    distinct = int(len(np.unique(exponents)))

    if trace.protocol == "rbar":
        cursor_bits = math.ceil(math.log2(trace.params.ell)) if trace.params.ell > 1 else 0
        per_msg = cursor_bits + 2 * entry_bits
        return MessageBitsReport(
            np.full(t_max, per_msg * n, dtype=np.int64), per_msg, distinct, (lo, hi)
        )

    # rbard: heartbeats cost 1 bit; active messages carry the counter and
    # both full vectors.  Message content at round t is the state at the
    # end of round t-1, hence the one-round shifts below.
    c_max = int(trace.counters.max()) if trace.counters.size else 0
    counter_bits = math.ceil(math.log2(c_max + 1)) if c_max > 0 else 0
    body_bits = 2 * trace.params.ell * entry_bits
    full_bits = counter_bits + body_bits

    starts = np.asarray(trace.start_rounds)
    rounds = np.arange(1, t_max + 1)[:, None]
    active = rounds >= starts[None, :]
    n_active = active.sum(axis=1)
    n_null = n - n_active
    per_round = n_null * 1 + n_active * full_bits

    decided_prev = np.zeros((t_max, n), dtype=bool)
    decided_prev[1:] = ~np.isnan(trace.decisions[:-1])
    n_suppressed = (active & decided_prev).sum(axis=1)
    suppressed_per_round = per_round - n_suppressed * counter_bits

    per_message_max = full_bits if n_active.any() else 1
    return MessageBitsReport(
        per_round.astype(np.int64),
        per_message_max,
        distinct,
        (lo, hi),
        suppressed_per_round.astype(np.int64),
    )


def dump_trace_jsonl(trace: TrialTrace, fp: IO[str]) -> None:
    """JSON-Lines dump: a metadata header, then one object per round."""
    header = {
        "config": trace.config_digest,
        "protocol": trace.protocol,
        "n": trace.n,
        "t_max": trace.t_max,
        "theta": trace.theta,
        "shifted_sum": trace.shifted_sum,
    }
    fp.write(json.dumps(header) + "\n")
    bits = message_bits(trace).per_round
    for t in range(1, trace.t_max + 1):
        agents = []
        for u in range(trace.n):
            x = trace.estimates[t - 1, u]
            d = None if trace.decisions is None else trace.decisions[t - 1, u]
            agents.append(
                {
                    "x": None if math.isnan(x) else x,
                    "d": None if d is None or math.isnan(d) else d,
                    "C": None if trace.counters is None else int(trace.counters[t - 1, u]),
                }
            )
        fp.write(json.dumps({"t": t, "agents": agents, "msg_bits": int(bits[t - 1])}) + "\n")
