"""Exponential sampling, protocol parameter formulas, and tail checks.

Sampling is inverse-CDF: -ln(U)/rate with U uniform on (0, 1].  This is
exact, branch-free, and reproducible across platforms up to float
rounding, which matters because consensus checks elsewhere compare
values bit for bit.

Randomness is organized as keyed streams: a stream is addressed by
(master seed, trial, agent, purpose) and two streams with the same key
yield the same sample sequence, while distinct agents or purposes get
independent sequences.  Trials can therefore run in parallel with no
shared RNG state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from mpmath import mp

from .seeds import stable_seed


@dataclass(frozen=True)
class ProtocolParams:
    """Run parameters shared by the randomized protocols.

    epsilon: admissible estimation error, in (0, 1/2).
    eta: tolerated probability of an inaccurate run, in (0, 1/2).
    a, b: interval known to contain every input value.
    ell: replication count of the sampled vectors.
    beta: rounding ratio of the quantized variants (None when unused).
    size_bound: known upper bound N on the network size (deciding
        variant only).

    The factory functions params_r / params_rbar / params_rbard derive
    ell and beta from the protocol formulas; experiments that pin ell
    explicitly (e.g. the blocking-adversary run) construct this class
    directly.
    """

    epsilon: float
    eta: float
    a: float
    b: float
    ell: int
    beta: Optional[float] = None
    size_bound: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in (0, 1/2), got {self.epsilon}")
        if not 0 < self.eta < 0.5:
            raise ValueError(f"eta must be in (0, 1/2), got {self.eta}")
        if self.a > self.b:
            raise ValueError(f"need a <= b, got a={self.a}, b={self.b}")
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if self.beta is not None and self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.size_bound is not None and self.size_bound < 1:
            raise ValueError(f"size_bound must be >= 1, got {self.size_bound}")

    @property
    def width(self) -> float:
        """Shifted input range b - a + 1 appearing in every formula."""
        return self.b - self.a + 1.0

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "eta": self.eta,
            "a": self.a,
            "b": self.b,
            "ell": self.ell,
            "beta": self.beta,
            "size_bound": self.size_bound,
        }


def params_from_json(obj: dict) -> ProtocolParams:
    return ProtocolParams(
        epsilon=float(obj["epsilon"]),
        eta=float(obj["eta"]),
        a=float(obj["a"]),
        b=float(obj["b"]),
        ell=int(obj["ell"]),
        beta=None if obj.get("beta") is None else float(obj["beta"]),
        size_bound=None if obj.get("size_bound") is None else int(obj["size_bound"]),
    )


def _stable_ceil(make_expr) -> int:
    """Ceiling of an mpmath expression, cross-checked at two precisions.

    The replication counts are ceilings of log expressions that can sit
    arbitrarily close to an integer; evaluating at 40 and 80 digits and
    demanding agreement rules out a boundary flip from rounding.
    """
    values = []
    for dps in (40, 80):
        with mp.workdps(dps):
            values.append(int(mp.ceil(make_expr())))
    if values[0] != values[1]:
        raise ArithmeticError(f"ceiling unstable across precisions: {values}")
    return values[0]


def _check_ranges(epsilon: float, eta: float, a: float, b: float) -> None:
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must be in (0, 1/2), got {epsilon}")
    if not 0 < eta < 0.5:
        raise ValueError(f"eta must be in (0, 1/2), got {eta}")
    if a > b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")


def params_r(epsilon: float, eta: float, a: float, b: float) -> ProtocolParams:
    """Parameters for the full-vector protocol: ell = ceil(27 ln(4/eta) w^2 / eps^2)."""
    _check_ranges(epsilon, eta, a, b)
    w = b - a + 1.0
    ell = _stable_ceil(lambda: 27 * mp.log(4 / mp.mpf(eta)) * mp.mpf(w) ** 2 / mp.mpf(epsilon) ** 2)
    return ProtocolParams(epsilon=epsilon, eta=eta, a=a, b=b, ell=ell)


def params_rbar(epsilon: float, eta: float, a: float, b: float) -> ProtocolParams:
    """Quantized variant: ell = ceil(108 ln(8/eta) w^2 / eps^2), beta = eps / (8 w)."""
    _check_ranges(epsilon, eta, a, b)
    w = b - a + 1.0
    ell = _stable_ceil(lambda: 108 * mp.log(8 / mp.mpf(eta)) * mp.mpf(w) ** 2 / mp.mpf(epsilon) ** 2)
    return ProtocolParams(epsilon=epsilon, eta=eta, a=a, b=b, ell=ell, beta=epsilon / (8.0 * w))


def params_rbard(epsilon: float, eta: float, a: float, b: float, size_bound: int) -> ProtocolParams:
    """Deciding variant: ell = max(ceil(108 ln(24/eta) w^2/eps^2), ceil(243 ln(6 N^2/eta)))."""
    _check_ranges(epsilon, eta, a, b)
    if size_bound < 1:
        raise ValueError(f"size_bound must be >= 1, got {size_bound}")
    w = b - a + 1.0
    accuracy_term = _stable_ceil(
        lambda: 108 * mp.log(24 / mp.mpf(eta)) * mp.mpf(w) ** 2 / mp.mpf(epsilon) ** 2
    )
    firing_term = _stable_ceil(lambda: 243 * mp.log(6 * mp.mpf(size_bound) ** 2 / mp.mpf(eta)))
    return ProtocolParams(
        epsilon=epsilon,
        eta=eta,
        a=a,
        b=b,
        ell=max(accuracy_term, firing_term),
        beta=epsilon / (8.0 * w),
        size_bound=size_bound,
    )


@dataclass
class RngStream:
    """Keyed, positioned stream of uniforms on (0, 1].

    Identical (seed, trial, agent, purpose) keys reproduce identical
    sequences bit for bit; the generator's occasional exact 0 is mapped
    to 1 so downstream -ln(U) stays finite.
    """

    seed: int
    trial: int = 0
    agent: int = 0
    purpose: str = "protocol"
    position: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        key = [self.seed, self.trial, self.agent, stable_seed("purpose", self.purpose)]
        self._gen = np.random.default_rng(np.random.SeedSequence(entropy=key))

    def uniforms(self, k: int) -> np.ndarray:
        """k uniforms on (0, 1], advancing the stream by k."""
        us = self._gen.random(k)
        us[us == 0.0] = 1.0
        self.position += k
        return us

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])


def sample_exponential(rate: float, stream) -> float:
    """One Exp(rate) sample via inverse CDF: -ln(U)/rate."""
    if rate <= 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    return float(-np.log(stream.uniform()) / rate)


def sample_exponentials(rate: float, size: int, stream) -> np.ndarray:
    """Batch of Exp(rate) samples, bit-identical to repeated scalar calls."""
    if rate <= 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    return -np.log(stream.uniforms(size)) / rate


@dataclass(frozen=True)
class ConcentrationParams:
    """Configuration of one empirical tail experiment.

    ell samples of Exp(rate) per repetition; the deviation event is
    |mean - 1/rate| >= alpha/rate, widened to (alpha + beta + alpha*beta)/rate
    when the samples are rounded with ratio beta first.
    """

    ell: int
    rate: float
    alpha: float
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if self.rate <= 0:
            raise ValueError(f"rate must be > 0, got {self.rate}")
        if not 0 < self.alpha < 0.5:
            raise ValueError(f"alpha must be in (0, 1/2), got {self.alpha}")
        if self.beta is not None and self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


def chernoff_bound(ell: int, alpha: float) -> float:
    """Analytic deviation bound 2 exp(-ell alpha^2 / 3) for the mean of
    ell i.i.d. exponentials (same form with or without rounding)."""
    return 2.0 * float(np.exp(-ell * alpha * alpha / 3.0))


def empirical_tail(cp: ConcentrationParams, reps: int, stream) -> float:
    """Frequency of the deviation event over `reps` repetitions."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    from .quantization import dequantize_array, quantize_array

    us = stream.uniforms(reps * cp.ell).reshape(reps, cp.ell)
    xs = -np.log(us) / cp.rate
    threshold = cp.alpha / cp.rate
    if cp.beta is not None:
        xs = dequantize_array(quantize_array(xs, cp.beta), cp.beta)
        threshold = (cp.alpha + cp.beta + cp.alpha * cp.beta) / cp.rate
    deviations = np.abs(xs.mean(axis=1) - 1.0 / cp.rate)
    return float(np.mean(deviations >= threshold))


def min_exponential_stats(
    rates: list[float], xs: list[float], reps: int, stream
) -> tuple[float, list[float]]:
    """Empirical mean and survival frequencies of min of independent
    exponentials with the given rates.

    The minimum should behave like a single exponential of rate
    sum(rates): mean 1/sum(rates), survival P(min > x) = exp(-sum(rates) x).
    Returns (mean, [frequency of min > x for each x]).
    """
    rates_arr = np.asarray(rates, dtype=np.float64)
    us = stream.uniforms(reps * len(rates)).reshape(reps, len(rates))
    mins = (-np.log(us) / rates_arr).min(axis=1)
    return float(mins.mean()), [float(np.mean(mins > x)) for x in xs]
