"""Round-based link generation and memory depolarization.

Timing contract: in round ``r`` link attempts resolve first, then all protocol
logic runs instantaneously, then every qubit still stored takes one noise
step.  A qubit created in round ``t`` and consumed in round ``t'`` therefore
sees exactly ``t' - t`` noise steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_DELTA_T_MS = 1.0
DEFAULT_GAMMA_DB_PER_KM = 0.2
PAULI_LETTERS = ("I", "X", "Y", "Z")


@dataclass(frozen=True)
class LinkConfig:
    """Per-node link success probabilities and the per-round depolarization."""

    p_link: tuple[float, ...]
    p_depol: float = 0.0
    delta_t: float = DEFAULT_DELTA_T_MS
    tau: float | None = None

    def __post_init__(self):
        p_link = tuple(float(p) for p in self.p_link)
        object.__setattr__(self, "p_link", p_link)
        if len(p_link) < 1:
            raise ValueError("need at least one end node")
        for p in p_link:
            if not 0.0 < p <= 1.0:
                raise ValueError(f"p_link entries must lie in (0, 1], got {p}")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.tau is not None:
            if self.tau <= 0:
                raise ValueError("tau must be positive")
            object.__setattr__(self, "p_depol", depol_from_coherence(self.delta_t, self.tau))
        if not 0.0 <= self.p_depol <= 1.0:
            raise ValueError(f"p_depol must lie in [0, 1], got {self.p_depol}")

    @property
    def n(self) -> int:
        return len(self.p_link)

    @classmethod
    def homogeneous(cls, n: int, p_link: float, p_depol: float = 0.0, **kw) -> LinkConfig:
        return cls((p_link,) * n, p_depol, **kw)


def depol_from_coherence(delta_t: float, tau: float) -> float:
    """Single-round depolarization probability ``1 - exp(-delta_t / tau)``."""
    return -math.expm1(-delta_t / tau)


def sample_arrivals(cfg: LinkConfig, rng: np.random.Generator) -> np.ndarray:
    """Round (1, 2, ...) in which each node's first link attempt succeeds."""
    return rng.geometric(np.asarray(cfg.p_link))


def link_probability_from_length(length_km: float, gamma: float = DEFAULT_GAMMA_DB_PER_KM) -> float:
    if length_km < 0 or gamma < 0:
        raise ValueError("length and attenuation must be non-negative")
    return 10.0 ** (-gamma * length_km / 10.0)


def heterogeneous_lengths(n: int, delta_l: float, base_km: float = 25.0) -> list[float]:
    """``L_i = base + (i - 3) * delta_l`` for ``i = 1..n``."""
    if n < 2:
        raise ValueError("need n >= 2")
    if delta_l < 0:
        raise ValueError("delta_L must be non-negative")
    lengths = [base_km + (i - 3) * delta_l for i in range(1, n + 1)]
    if min(lengths) <= 0:
        raise ValueError(f"delta_L={delta_l} gives a non-positive fiber length")
    return lengths


def heterogeneous_link_probabilities(n: int, delta_l: float, gamma: float = DEFAULT_GAMMA_DB_PER_KM) -> tuple[float, ...]:
    return tuple(link_probability_from_length(L, gamma) for L in heterogeneous_lengths(n, delta_l))


# ---------------------------------------------------------------------------
# noise


def pauli_probabilities(p_depol: float, rounds: int = 1) -> np.ndarray:
    """Distribution of the net Pauli (I, X, Y, Z) after ``rounds`` noise steps.

    Each step draws X, Y, Z with probability ``p/4`` each; composing ``k``
    steps keeps the channel depolarizing with survival ``(1 - p)**k``.
    """
    if rounds <= 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    survive = (1.0 - p_depol) ** rounds
    err = (1.0 - survive) / 4.0
    return np.array([1.0 - 3.0 * err, err, err, err])


def sample_pauli(p_depol: float, rounds: int, rng: np.random.Generator) -> str:
    if rounds <= 0 or p_depol == 0.0:
        return "I"
    err = (1.0 - (1.0 - p_depol) ** rounds) / 4.0
    u = rng.random()
    if u >= 3.0 * err:
        return "I"
    return PAULI_LETTERS[1 + min(int(u // err), 2)]


@dataclass
class MemoryLedger:
    """Creation round of every stored qubit and the total exposure so far."""

    created: dict[int, int] = field(default_factory=dict)
    consumed: dict[int, int] = field(default_factory=dict)
    exposures: int = 0

    def store(self, qubit: int, round_: int):
        if qubit in self.created:
            raise ValueError(f"qubit {qubit} already stored")
        self.created[qubit] = round_

    def release(self, qubit: int, round_: int):
        if qubit not in self.created or qubit in self.consumed:
            raise ValueError(f"qubit {qubit} is not live")
        self.consumed[qubit] = round_
        self.exposures += round_ - self.created[qubit]

    def is_live(self, qubit: int) -> bool:
        return qubit in self.created and qubit not in self.consumed

    def live(self) -> list[int]:
        return sorted(q for q in self.created if q not in self.consumed)

    def release_all(self, round_: int):
        for q in self.live():
            self.release(q, round_)


@dataclass
class NoiseRecord:
    qubit: int
    start_round: int
    rounds: int
    pauli: str


class Depolarizer:
    """Applies memory noise to live qubits as the clock advances.

    ``batched`` draws one net Pauli per qubit for a stretch of idle rounds;
    ``per-round`` draws each round separately.  Both give the same
    distribution; ``batched`` is what makes p_link = 1e-3 sweeps affordable.
    """

    def __init__(self, p_depol: float, rng: np.random.Generator | None, mode: str = "batched",
                 record: bool = False):
        if mode not in ("batched", "per-round"):
            raise ValueError(f"unknown noise mode {mode!r}")
        if not 0.0 <= p_depol <= 1.0:
            raise ValueError("p_depol must lie in [0, 1]")
        self.p_depol = p_depol
        self.rng = rng
        self.mode = mode
        self.records: list[NoiseRecord] | None = [] if record else None

    def advance(self, register, ledger: MemoryLedger, start_round: int, rounds: int):
        if rounds <= 0 or self.p_depol == 0.0:
            return
        for q in ledger.live():
            if self.mode == "batched":
                letter = sample_pauli(self.p_depol, rounds, self.rng)
            else:
                letter = "I"
                for _ in range(rounds):
                    letter = multiply_letters(letter, sample_pauli(self.p_depol, 1, self.rng))
            if self.records is not None:
                self.records.append(NoiseRecord(q, start_round, rounds, letter))
            if letter != "I":
                register.pauli(letter, q)


_MULT = {("I", a): a for a in PAULI_LETTERS}
_MULT.update({(a, "I"): a for a in PAULI_LETTERS})
_MULT.update({(a, a): "I" for a in PAULI_LETTERS})
_MULT.update({("X", "Y"): "Z", ("Y", "X"): "Z", ("Y", "Z"): "X", ("Z", "Y"): "X",
              ("X", "Z"): "Y", ("Z", "X"): "Y"})


def multiply_letters(a: str, b: str) -> str:
    """Product of two single-qubit Paulis up to phase."""
    return _MULT[(a, b)]


def depolarize_round(state, ledger: MemoryLedger, p_depol: float, rng: np.random.Generator):
    """One noise step: each live qubit independently gets X, Y or Z w.p. ``p/4`` each."""
    if not 0.0 <= p_depol <= 1.0:
        raise ValueError("p_depol must lie in [0, 1]")
    if p_depol == 0.0:
        return state
    for q in ledger.live():
        letter = sample_pauli(p_depol, 1, rng)
        if letter != "I":
            state.pauli(letter, q)
    return state


def sample_pauli_array(p_depol: float, rounds: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised net-Pauli draw; returns ``(x_bit, z_bit)`` arrays shaped like ``rounds``."""
    rounds = np.asarray(rounds)
    err = (1.0 - (1.0 - p_depol) ** np.maximum(rounds, 0)) / 4.0
    u = rng.random(rounds.shape)
    hit = u < 3.0 * err
    with np.errstate(divide="ignore", invalid="ignore"):
        which = np.where(hit, np.floor(u / np.where(err > 0, err, 1.0)), -1)
    # 0 -> X, 1 -> Y, 2 -> Z
    x = hit & (which <= 1)
    z = hit & (which >= 1)
    return x, z


def max_arrival_cdf(p_link: Sequence[float], t: int) -> float:
    """P(max arrival round <= t) for independent geometric arrivals."""
    return float(np.prod([1.0 - (1.0 - p) ** t for p in p_link]))
