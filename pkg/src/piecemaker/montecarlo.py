"""Monte Carlo orchestration, estimators and comparison metrics.

Randomness layout: trials are grouped in fixed chunks of ``CHUNK`` trials.
Chunk ``c`` of a scenario draws its arrival matrix from
``stream(seed, key + (c,), "arrivals")``.  The batch kernels take their noise
from the chunk's ``noise`` stream; the gate-level engines give trial ``j`` of
the chunk its own streams ``stream(seed, key + (c, j), site)``.  Nothing
depends on the worker count.  Two scenarios with the same key see the same
arrivals, which is what paired mode relies on.
"""

from __future__ import annotations

import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .graphs import CoverCatalog
from .network import LinkConfig
from .protocols import PROTOCOLS, ProtocolError, Target, TrialStreams, run_protocol

CHUNK = 4096
ENGINE_CHOICES = ("auto", "batch", "frame", "tableau")
WORKERS_ENV = "PIECEMAKER_WORKERS"


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    trials: int
    mean_completion_rounds: float = float("nan")


@dataclass
class Accumulator:
    """Exact running sums; merging partial accumulators is order independent
    because per-trial fidelities here are dyadic and completion rounds are
    integers."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    rounds: int = 0

    def add(self, values: np.ndarray, completion: np.ndarray | None = None):
        values = np.asarray(values, dtype=float)
        self.count += values.size
        self.total += float(values.sum())
        self.total_sq += float((values * values).sum())
        if completion is not None:
            self.rounds += int(np.asarray(completion).sum())

    def merge(self, other: Accumulator) -> Accumulator:
        return Accumulator(self.count + other.count, self.total + other.total,
                           self.total_sq + other.total_sq, self.rounds + other.rounds)

    def estimate(self) -> Estimate:
        if self.count == 0:
            raise ValueError("no trials accumulated")
        mean = self.total / self.count
        if self.count > 1:
            var = max(self.total_sq - self.count * mean * mean, 0.0) / (self.count - 1)
            stderr = math.sqrt(var / self.count)
        else:
            stderr = 0.0
        return Estimate(mean, stderr, self.count, self.rounds / self.count)


@dataclass(frozen=True)
class Scenario:
    protocol: str
    target: Target
    link: LinkConfig
    trials: int
    seed: int = 0
    key: tuple = ()
    engine: str = "auto"
    piecemaker_qubit: str = "explicit"
    noise_mode: str = "batched"
    catalog: CoverCatalog | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.engine not in ENGINE_CHOICES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.link.n != self.target.n:
            raise ValueError("link config and target disagree on n")
        if self.protocol == "general-piecemaker" and self.catalog is None:
            raise ValueError("general-piecemaker needs a cover catalog")

    def resolved_engine(self) -> str:
        if self.engine != "auto":
            return self.engine
        if self.noise_mode == "batched" and (
                self.protocol == "factory" or (self.protocol == "ghz-piecemaker" and self.target.is_ghz)):
            return "batch"
        return "frame"


def _chunks(trials: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, trials - c * CHUNK)) for c in range(math.ceil(trials / CHUNK))]


def _chunk_values(scenario: Scenario, chunk: int, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-trial fidelity, completion round and exposure count for one chunk."""
    streams = TrialStreams.derive(scenario.seed, scenario.key + (chunk,))
    arrivals = kernels.sample_arrival_matrix(scenario.link, size, streams.arrivals)
    engine = scenario.resolved_engine()
    p = scenario.link.p_depol
    if engine == "batch":
        if scenario.protocol == "ghz-piecemaker":
            if not scenario.target.is_ghz:
                raise ProtocolError("ghz-piecemaker only distributes GHZ targets")
            b = kernels.ghz_piecemaker_batch(arrivals, p, streams.noise)
        elif scenario.protocol == "factory":
            gx, gz = scenario.target.generator_bits
            b = kernels.factory_batch(arrivals, p, gx, gz, streams.noise)
        else:
            raise ProtocolError(f"no batch kernel for {scenario.protocol}")
        return b.fidelity, b.completion_round, b.exposures
    fid = np.empty(size)
    done = np.empty(size, dtype=np.int64)
    exposures = np.empty(size, dtype=np.int64)
    for j in range(size):
        trial_streams = TrialStreams.derive(scenario.seed, scenario.key + (chunk, j))
        try:
            run = run_protocol(scenario.protocol, scenario.target, arrivals[j], scenario.link, trial_streams,
                               catalog=scenario.catalog, engine=engine,
                               piecemaker_qubit=scenario.piecemaker_qubit, noise_mode=scenario.noise_mode)
        except ProtocolError as exc:
            raise ProtocolError(f"trial {chunk * CHUNK + j}: {exc}") from exc
        fid[j] = run.fidelity()
        done[j] = run.completion_round
        exposures[j] = run.exposures
    return fid, done, exposures


def trial_values(scenario: Scenario) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All per-trial values in trial order (single process)."""
    parts = [_chunk_values(scenario, c, size) for c, size in _chunks(scenario.trials)]
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def _chunk_accumulator(args) -> Accumulator:
    scenario, chunk, size = args
    fid, done, _ = _chunk_values(scenario, chunk, size)
    acc = Accumulator()
    acc.add(fid, done)
    return acc


def resolve_workers(workers: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        workers = int(env)
    return max(1, int(workers or 1))


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_trials(scenario: Scenario, workers: int | None = None) -> Estimate:
    jobs = [(scenario, c, size) for c, size in _chunks(scenario.trials)]
    acc = Accumulator()
    for part in _map(_chunk_accumulator, jobs, resolve_workers(workers)):
        acc = acc.merge(part)
    return acc.estimate()


@dataclass(frozen=True)
class PairedEstimate:
    pm: Estimate
    factory: Estimate
    difference: Estimate  # per-trial pm - factory

    @property
    def delta_f(self) -> float:
        return delta_F(self.pm, self.factory)

    @property
    def delta_eps(self) -> float | None:
        return delta_eps(self.pm, self.factory)


def run_paired(pm: Scenario, factory: Scenario) -> PairedEstimate:
    """Run two scenarios on shared arrival rounds (they must share seed and key)."""
    if (pm.seed, pm.key, pm.trials, pm.link) != (factory.seed, factory.key, factory.trials, factory.link):
        raise ValueError("paired scenarios must share seed, key, trial count and link config")
    a, ra, _ = trial_values(pm)
    b, rb, _ = trial_values(factory)
    accs = [Accumulator() for _ in range(3)]
    accs[0].add(a, ra)
    accs[1].add(b, rb)
    accs[2].add(a - b, ra)
    return PairedEstimate(*(acc.estimate() for acc in accs))


# ---------------------------------------------------------------------------
# metrics


def delta_F(pm: Estimate, factory: Estimate) -> float:
    return pm.mean - factory.mean


def delta_eps(pm: Estimate, factory: Estimate) -> float | None:
    """Relative reduction of infidelity; ``None`` when Factory is perfect."""
    if factory.mean >= 1.0:
        return None
    return (pm.mean - factory.mean) / (1.0 - factory.mean)


def log_grid(lo: float, hi: float, count: int) -> list[float]:
    if not 0 < lo < hi or count < 2:
        raise ValueError("log grid needs 0 < lo < hi and count >= 2")
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]


@dataclass(frozen=True)
class CellKey:
    protocol: str
    target: str
    p_link: float
    p_depol: float
    delta_l: float = 0.0


@dataclass
class SweepTable:
    rows: dict[CellKey, Estimate] = field(default_factory=dict)
    n: dict[str, int] = field(default_factory=dict)

    def add(self, key: CellKey, est: Estimate, n: int):
        if key in self.rows:
            raise ValueError(f"duplicate cell {key}")
        self.rows[key] = est
        self.n[key.target] = n

    def get(self, key: CellKey) -> Estimate:
        try:
            return self.rows[key]
        except KeyError:
            raise KeyError(f"missing cell {key}") from None

    def protocols(self) -> list[str]:
        return sorted({k.protocol for k in self.rows})

    def cells(self) -> list[tuple[str, float, float, float]]:
        """Distinct (target, p_link, p_depol, delta_l) in sorted order."""
        return sorted({(k.target, k.p_link, k.p_depol, k.delta_l) for k in self.rows})

    def filter(self, predicate: Callable[[CellKey], bool]) -> SweepTable:
        out = SweepTable()
        for k, v in self.rows.items():
            if predicate(k):
                out.add(k, v, self.n[k.target])
        return out

    def sorted_items(self) -> list[tuple[CellKey, Estimate]]:
        return sorted(self.rows.items(), key=lambda kv: (kv[0].protocol, kv[0].target, kv[0].p_link,
                                                         kv[0].p_depol, kv[0].delta_l))


def sweep(protocols: Sequence[str], target: Target, p_links: Sequence[float], p_depols: Sequence[float],
          trials: int, seed: int = 0, *, delta_ls: Sequence[float] = (0.0,), link_factory=None,
          paired: bool = False, workers: int | None = None, catalog: CoverCatalog | None = None,
          piecemaker_qubit: str = "explicit", engine: str = "auto") -> SweepTable:
    """Evaluate every (protocol, p_link, p_depol, delta_L) cell.

    ``link_factory(p_link, p_depol, delta_l)`` builds the LinkConfig; the
    default is homogeneous links.  With ``paired`` the cell key omits the
    protocol, so all protocols in a cell see the same arrival rounds.
    """
    if link_factory is None:
        def link_factory(pl, pd, dl):
            return LinkConfig.homogeneous(target.n, pl, pd)
    scenarios = []
    for a, pl in enumerate(p_links):
        for b, pd in enumerate(p_depols):
            for c, dl in enumerate(delta_ls):
                link = link_factory(pl, pd, dl)
                for proto in protocols:
                    key = (a, b, c) if paired else (a, b, c, PROTOCOLS.index(proto))
                    sc = Scenario(proto, target, link, trials, seed, key, engine=engine,
                                  piecemaker_qubit=piecemaker_qubit, catalog=catalog)
                    scenarios.append((CellKey(proto, target.name, float(pl), float(pd), float(dl)), sc))
    jobs = [(sc, ch, size) for _, sc in scenarios for ch, size in _chunks(sc.trials)]
    parts = _map(_chunk_accumulator, jobs, resolve_workers(workers))
    table = SweepTable()
    pos = 0
    for key, sc in scenarios:
        acc = Accumulator()
        for part in parts[pos:pos + len(_chunks(sc.trials))]:
            acc = acc.merge(part)
        pos += len(_chunks(sc.trials))
        table.add(key, acc.estimate(), target.n)
    return table


# ---------------------------------------------------------------------------
# selections, aggregates, thresholds

_VARS = {"p_link": "p_link", "p_depol": "p_depol", "delta_l": "delta_l", "delta_L": "delta_l"}
_OPS = {"<": float.__lt__, "<=": float.__le__, ">": float.__gt__, ">=": float.__ge__}
NAMED_SELECTIONS = {"overview": "0.1 < p_link < 0.5 and p_depol < 0.02"}


def parse_selection(text: str) -> Callable[[CellKey], bool]:
    """Compile a conjunction of chained comparisons such as
    ``"0.1 < p_link < 0.5 and p_depol < 0.02"`` or a named selection."""
    text = NAMED_SELECTIONS.get(text, text)
    clauses = []
    for clause in re.split(r"\band\b", text):
        tokens = re.findall(r"<=|>=|<|>|[A-Za-z_]+|[-+0-9.eE]+", clause)
        if len(tokens) < 3 or len(tokens) % 2 == 0:
            raise ValueError(f"cannot parse selection clause {clause.strip()!r}")
        terms, ops = tokens[0::2], tokens[1::2]
        for op in ops:
            if op not in _OPS:
                raise ValueError(f"unknown comparison {op!r} in {clause.strip()!r}")
        for t in terms:
            if t[0].isalpha() and t not in _VARS:
                raise ValueError(f"unknown variable {t!r} in selection")
        clauses.append((terms, ops))

    def value(term: str, key: CellKey) -> float:
        return float(getattr(key, _VARS[term])) if term in _VARS else float(term)

    def predicate(key: CellKey) -> bool:
        for terms, ops in clauses:
            for left, op, right in zip(terms, ops, terms[1:]):
                if not _OPS[op](value(left, key), value(right, key)):
                    return False
        return True

    return predicate


@dataclass(frozen=True)
class Aggregate:
    mean_fidelity: dict[str, float]
    mean_delta_f: float
    mean_delta_eps: float | None
    max_delta_f: float
    max_delta_eps: float | None
    cells: int


def _pairs(table: SweepTable, pm: str, factory: str):
    for target, pl, pd, dl in table.cells():
        a = table.get(CellKey(pm, target, pl, pd, dl))
        b = table.get(CellKey(factory, target, pl, pd, dl))
        yield a, b


def aggregate(table: SweepTable, selection=None, pm: str = "ghz-piecemaker",
              factory: str = "factory") -> Aggregate:
    """Means over ``selection`` and maxima over the whole table.

    Cells where Factory is perfect have no relative improvement and are left
    out of the ``delta_eps`` mean and maximum.
    """
    if isinstance(selection, str):
        selection = parse_selection(selection)
    chosen = table if selection is None else table.filter(selection)
    if not chosen.rows:
        raise ValueError("selection matches no cells")
    pairs = list(_pairs(chosen, pm, factory))
    means = {p: float(np.mean([est.mean for k, est in chosen.rows.items() if k.protocol == p]))
             for p in (pm, factory)}
    dfs = [delta_F(a, b) for a, b in pairs]
    des = [e for e in (delta_eps(a, b) for a, b in pairs) if e is not None]
    all_pairs = list(_pairs(table, pm, factory))
    all_des = [e for e in (delta_eps(a, b) for a, b in all_pairs) if e is not None]
    return Aggregate(means, float(np.mean(dfs)), float(np.mean(des)) if des else None,
                     max(delta_F(a, b) for a, b in all_pairs), max(all_des) if all_des else None, len(pairs))


@dataclass(frozen=True)
class ThresholdResult:
    cells: frozenset  # (p_link, p_depol, delta_l) with mean >= threshold
    min_p_link: dict  # p_depol -> smallest achieving p_link (None if none)
    max_p_depol: dict  # p_link -> largest achieving p_depol (None if none)


def threshold_map(table: SweepTable, threshold: float) -> dict[str, ThresholdResult]:
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    out = {}
    for proto in table.protocols():
        rows = {k: v for k, v in table.rows.items() if k.protocol == proto}
        hits = frozenset((k.p_link, k.p_depol, k.delta_l) for k, v in rows.items() if v.mean >= threshold)
        p_depols = sorted({k.p_depol for k in rows})
        p_links = sorted({k.p_link for k in rows})
        min_pl = {pd: min((pl for pl, d, _ in hits if d == pd), default=None) for pd in p_depols}
        max_pd = {pl: max((d for p, d, _ in hits if p == pl), default=None) for pl in p_links}
        out[proto] = ThresholdResult(hits, min_pl, max_pd)
    return out


def containment_violations(table: SweepTable, threshold: float, pm: str = "ghz-piecemaker",
                           factory: str = "factory", sigmas: float = 3.0) -> list[CellKey]:
    """Cells where Factory reaches ``threshold`` but Piecemaker falls short by
    more than ``sigmas`` combined standard errors."""
    bad = []
    for target, pl, pd, dl in table.cells():
        a = table.get(CellKey(pm, target, pl, pd, dl))
        b = table.get(CellKey(factory, target, pl, pd, dl))
        if b.mean >= threshold > a.mean:
            if b.mean - a.mean > sigmas * math.hypot(a.stderr, b.stderr):
                bad.append(CellKey(pm, target, pl, pd, dl))
    return bad


def default_trials(n: int) -> int:
    """10^5 trials for n in {3, 5}, 10^4 otherwise."""
    return 100_000 if n in (3, 5) else 10_000
