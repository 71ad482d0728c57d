"""Switch protocols: GHZ Piecemaker, MVC, general Piecemaker and Factory.

Qubit layout on the register (1-based): end-node qubit ``l_i = i``, switch
memory ``m_i = n + i``, the explicit Piecemaker qubit ``2n + 1`` and the
Factory's auxiliary qubits ``2n + i``.

The same protocol code drives either backend: ``"tableau"`` (exact
stabilizer state; measurement outcomes are sampled) or ``"frame"`` (Pauli
frame relative to the noiseless run; far cheaper, fidelity is 0 or 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .frame import PauliFrame, frame_commutes_with
from .graphs import CoverCatalog, Graph, is_vertex_cover, lc_sequence_cliffords, make_graph, shrink_to_minimal_cover
from .network import Depolarizer, LinkConfig, MemoryLedger
from .stabilizer import StabilizerState, graph_state, restrict, subsystem_fidelity

PROTOCOLS = ("ghz-piecemaker", "mvc", "general-piecemaker", "factory")
ENGINES = ("tableau", "frame")
SITES = {"arrivals": 0, "noise": 1, "measure": 2, "cover": 3}


class ProtocolError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# targets


@dataclass(frozen=True)
class Target:
    """A graph state, optionally followed by Hadamards on some vertices.

    ``Target.ghz(n)`` is the star centred on vertex 1 with Hadamards on the
    leaves, i.e. the GHZ state.
    """

    graph: Graph
    hadamards: frozenset = frozenset()
    name: str = ""

    @classmethod
    def ghz(cls, n: int) -> Target:
        if n < 2:
            raise ValueError("GHZ target needs n >= 2")
        return cls(make_graph("star", n), frozenset(range(2, n + 1)), f"ghz-{n}")

    @classmethod
    def of(cls, graph: Graph, name: str = "") -> Target:
        return cls(graph, frozenset(), name or f"graph-{graph.n}")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def is_ghz(self) -> bool:
        return self.hadamards == frozenset(range(2, self.n + 1)) and self.graph == make_graph("star", self.n)

    def state(self) -> StabilizerState:
        st = graph_state(self.graph)
        for v in sorted(self.hadamards):
            st.h(v)
        return st

    def prepare(self, register, qubits: Sequence[int]):
        """Write the target onto fresh ``|0>`` qubits; ``qubits[v-1]`` hosts vertex ``v``."""
        for q in qubits:
            register.h(q)
        for u, v in self.graph.sorted_edges():
            register.cz(qubits[u - 1], qubits[v - 1])
        for v in sorted(self.hadamards):
            register.h(qubits[v - 1])

    @cached_property
    def generator_bits(self) -> tuple[np.ndarray, np.ndarray]:
        gens = self.state().generators()
        return np.array([g.xs for g in gens]), np.array([g.zs for g in gens])


def as_target(target) -> Target:
    if isinstance(target, Target):
        return target
    if isinstance(target, Graph):
        return Target.of(target)
    raise TypeError(f"expected Target or Graph, got {type(target).__name__}")


# ---------------------------------------------------------------------------
# random streams


@dataclass
class TrialStreams:
    """Independent random streams for one trial, one per randomness site."""

    arrivals: np.random.Generator
    noise: np.random.Generator
    measure: np.random.Generator
    cover: np.random.Generator

    @classmethod
    def derive(cls, seed: int, key: Sequence[int] = ()) -> TrialStreams:
        key = tuple(int(k) for k in key)
        gens = {site: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key + (i,))))
                for site, i in SITES.items()}
        return cls(**gens)

    @classmethod
    def coerce(cls, rng) -> TrialStreams:
        if isinstance(rng, TrialStreams):
            return rng
        if isinstance(rng, np.random.Generator):
            return cls(rng, rng, rng, rng)
        if rng is None or isinstance(rng, (int, np.integer)):
            return cls.derive(0 if rng is None else int(rng))
        raise TypeError("rng must be a Generator, TrialStreams or an integer seed")


# ---------------------------------------------------------------------------
# run record


@dataclass
class ProtocolRun:
    protocol: str
    target: Target
    register: object
    completion_round: int
    transcript: list[tuple[str, int]]
    exposures: int
    arrivals: tuple[int, ...]
    cover: frozenset | None = None
    cover_round: int | None = None
    witness: Graph | None = None
    noise_records: list | None = None
    timeline: list[tuple[str, int]] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.target.n

    @property
    def end_qubits(self) -> list[int]:
        return list(range(1, self.n + 1))

    def end_state(self) -> StabilizerState:
        if not isinstance(self.register, StabilizerState):
            raise ProtocolError("end state is only available from the tableau engine")
        return restrict(self.register, self.end_qubits)

    def fidelity(self) -> float:
        if isinstance(self.register, StabilizerState):
            return subsystem_fidelity(self.register, self.end_qubits, self.target_state)
        xs, zs = self.register.restricted_bits(self.end_qubits)
        gx, gz = self.target.generator_bits
        return 1.0 if frame_commutes_with(xs, zs, gx, gz) else 0.0

    @property
    def target_state(self) -> StabilizerState:
        return self.target.state()

    def measured_rounds(self) -> dict[str, int]:
        """Round in which each transcript entry happened, keyed by label."""
        return dict(self.timeline)


def make_register(engine: str, size: int):
    if engine == "tableau":
        return StabilizerState(size)
    if engine == "frame":
        return PauliFrame(size)
    raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")


class _Session:
    """Clock, ledger, noise and transcript shared by all protocol drivers."""

    def __init__(self, n: int, size: int, cfg: LinkConfig, streams: TrialStreams, engine: str,
                 noise_mode: str, record_noise: bool):
        self.n = n
        self.register = make_register(engine, size)
        self.ledger = MemoryLedger()
        self.noise = Depolarizer(cfg.p_depol, streams.noise, noise_mode, record_noise)
        self.streams = streams
        self.transcript: list[tuple[str, int]] = []
        self.timeline: list[tuple[str, int, int]] = []
        self.round = 0

    def tick(self, r: int):
        if r < self.round:
            raise ProtocolError("time went backwards")
        self.noise.advance(self.register, self.ledger, self.round, r - self.round)
        self.round = r

    def link(self, i: int):
        """Heralded Bell pair between switch memory m_i and end node l_i."""
        l, m = i, self.n + i
        self.register.bell_pair(m, l)
        self.ledger.store(m, self.round)
        self.ledger.store(l, self.round)

    def measure(self, letters: dict[int, str], label: str) -> int:
        outcome = self.register.measure_letters(letters, self.streams.measure)
        self.record(label, outcome)
        return outcome

    def record(self, label: str, outcome: int):
        self.transcript.append((label, outcome))
        self.timeline.append((label, self.round))

    def finish(self, protocol: str, target: Target, arrivals, **extra) -> ProtocolRun:
        self.ledger.release_all(self.round)
        return ProtocolRun(protocol, target, self.register, self.round, self.transcript,
                           self.ledger.exposures, tuple(int(a) for a in arrivals),
                           noise_records=self.noise.records, timeline=self.timeline, **extra)


def _check_arrivals(arrivals, n: int) -> list[int]:
    arrivals = [int(a) for a in arrivals]
    if len(arrivals) != n:
        raise ProtocolError(f"expected {n} arrival rounds, got {len(arrivals)}")
    if min(arrivals) < 1:
        raise ProtocolError("arrival rounds start at 1")
    return arrivals


def _schedule(arrivals: list[int]):
    """Yield ``(round, [nodes arriving that round])`` in time order."""
    for r in sorted(set(arrivals)):
        yield r, [i + 1 for i, t in enumerate(arrivals) if t == r]


def _check_cfg(cfg: LinkConfig, n: int):
    if cfg.n != n:
        raise ProtocolError(f"link config has {cfg.n} nodes, target has {n}")


# ---------------------------------------------------------------------------
# building blocks


def fuse(state, a1: int, b1: int, b2: int, rng=None, *, ledger: MemoryLedger | None = None,
         round_: int | None = None) -> tuple[int, object]:
    """Gate-based fusion: CX(a1 -> b1), Z-measure b1, X on b2 if the outcome is 1.

    Returns ``(s, state)`` with ``s`` in {0, 1}.  With a ledger, ``b1`` is
    released (and reuse of consumed qubits is rejected).
    """
    if len({a1, b1, b2}) != 3:
        raise ProtocolError("fusion needs three distinct qubits")
    if ledger is not None:
        for q in (a1, b1, b2):
            if q in ledger.consumed:
                raise ProtocolError(f"qubit {q} was already consumed")
    state.cx(a1, b1)
    outcome = state.measure_letters({b1: "Z"}, rng)
    s = 0 if outcome == 1 else 1
    if s:
        state.pauli("X", b2)
    if ledger is not None:
        ledger.release(b1, ledger.created[b1] if round_ is None else round_)
    return s, state


def measure_generator(state, g_prime: Graph, v: int, applied_cz: set, rng=None, *,
                      live: Iterable[int] | None = None, n: int | None = None,
                      correct: bool = True) -> tuple[int, object, set]:
    """Measure ``K_v`` of ``g_prime`` at the switch.

    CZ from every not-yet-coupled neighbour's switch qubit to ``m_v``, then X on
    ``m_v``; outcome -1 is corrected by Z on the end node ``l_v``.  ``live`` is
    the set of vertices whose switch qubit is still held; a neighbour neither
    live nor already coupled is a precondition violation.
    """
    n = g_prime.n if n is None else n
    live = None if live is None else set(live)
    if live is not None and v not in live:
        raise ProtocolError(f"switch qubit of vertex {v} is not live")
    for u in sorted(g_prime.neighbors(v)):
        edge = (min(u, v), max(u, v))
        if edge in applied_cz:
            continue
        if live is not None and u not in live:
            raise ProtocolError(f"neighbour {u} of {v} never coupled and not live")
        state.cz(n + v, n + u)
        applied_cz.add(edge)
    outcome = state.measure_letters({n + v: "X"}, rng)
    if outcome == -1 and correct:
        state.pauli("Z", v)
    return outcome, state, applied_cz


# ---------------------------------------------------------------------------
# protocol drivers


def run_ghz_piecemaker(n: int, arrivals, cfg: LinkConfig, rng=None, *, engine: str = "tableau",
                       piecemaker_qubit: str = "explicit", noise_mode: str = "batched",
                       record_noise: bool = False) -> ProtocolRun:
    """Fuse each link into a hub qubit on arrival; X-measure the hub at the end."""
    if n < 2:
        raise ProtocolError("GHZ Piecemaker needs n >= 2")
    if piecemaker_qubit not in ("explicit", "virtual"):
        raise ProtocolError(f"piecemaker_qubit must be 'explicit' or 'virtual', got {piecemaker_qubit!r}")
    arrivals = _check_arrivals(arrivals, n)
    _check_cfg(cfg, n)
    streams = TrialStreams.coerce(rng)
    size = 2 * n + (1 if piecemaker_qubit == "explicit" else 0)
    sess = _Session(n, size, cfg, streams, engine, noise_mode, record_noise)
    reg = sess.register
    hub = None
    for r, nodes in _schedule(arrivals):
        sess.tick(r)
        for i in nodes:
            sess.link(i)
            if hub is None:
                if piecemaker_qubit == "virtual":
                    hub = n + i
                    continue
                hub = 2 * n + 1
                reg.reset_plus(hub)
                sess.ledger.store(hub, r)
            m = n + i
            reg.cx(hub, m)
            out = sess.measure({m: "Z"}, f"Z m{i}")
            if out == -1:
                reg.pauli("X", i)
            sess.ledger.release(m, r)
    out = sess.measure({hub: "X"}, "X hub")
    if out == -1:
        reg.pauli("Z", 1)
    sess.ledger.release(hub, sess.round)
    return sess.finish("ghz-piecemaker", Target.ghz(n), arrivals)


def _run_cover_protocol(name: str, target: Target, arrivals, cfg: LinkConfig, streams: TrialStreams,
                        select, engine: str, noise_mode: str, record_noise: bool) -> ProtocolRun:
    """Shared MVC machinery: wait for a cover, release non-cover links on arrival."""
    n = target.n
    sess = _Session(n, 2 * n, cfg, streams, engine, noise_mode, record_noise)
    reg = sess.register
    stored: set[int] = set()
    applied: set = set()
    chosen = None  # (cover, graph, entry)
    cover_round = None

    def measure(v: int, graph: Graph):
        out, _, _ = measure_generator(reg, graph, v, applied, streams.measure, live=stored, n=n)
        sess.record(f"K_{v}", out)
        sess.ledger.release(n + v, sess.round)
        stored.discard(v)

    for r, nodes in _schedule(arrivals):
        sess.tick(r)
        for i in nodes:
            sess.link(i)
            stored.add(i)
        if chosen is None:
            chosen = select(frozenset(stored))
            if chosen is not None:
                cover_round = r
        if chosen is not None:
            cover, graph, _ = chosen
            for v in sorted(stored - cover):
                measure(v, graph)
    cover, graph, entry = chosen
    for v in sorted(cover):
        measure(v, graph)
    if entry is not None:
        for v, gates in lc_sequence_cliffords(entry.lc_sequence, target.graph).items():
            for gate in gates:
                getattr(reg, gate.lower())(v)
    return sess.finish(name, target, arrivals, cover=cover, cover_round=cover_round, witness=graph)


def run_mvc(target, arrivals, cfg: LinkConfig, rng=None, *, engine: str = "tableau",
            noise_mode: str = "batched", record_noise: bool = False) -> ProtocolRun:
    """Minimal-vertex-cover protocol on the target graph itself."""
    target = as_target(target)
    if target.hadamards:
        raise ProtocolError("the MVC protocol distributes graph states; use a plain graph target")
    arrivals = _check_arrivals(arrivals, target.n)
    _check_cfg(cfg, target.n)
    streams = TrialStreams.coerce(rng)
    graph = target.graph

    def select(stored):
        if not is_vertex_cover(graph, stored):
            return None
        return shrink_to_minimal_cover(graph, stored, streams.cover), graph, None

    return _run_cover_protocol("mvc", target, arrivals, cfg, streams, select, engine, noise_mode, record_noise)


def run_general_piecemaker(target, catalog: CoverCatalog, arrivals, cfg: LinkConfig, rng=None, *,
                           engine: str = "tableau", noise_mode: str = "batched",
                           record_noise: bool = False) -> ProtocolRun:
    """Wait for a minimal local cover, run the MVC machinery on its witness, then
    undo the local complementations on the end nodes."""
    target = as_target(target)
    if target.hadamards:
        raise ProtocolError("general Piecemaker distributes graph states; use a plain graph target")
    if catalog.target != target.graph:
        raise ProtocolError("cover catalog was built for a different target graph")
    arrivals = _check_arrivals(arrivals, target.n)
    _check_cfg(cfg, target.n)
    streams = TrialStreams.coerce(rng)

    def select(stored):
        entry = catalog.first_within(stored)
        if entry is None:
            return None
        return entry.cover, entry.witness, entry

    return _run_cover_protocol("general-piecemaker", target, arrivals, cfg, streams, select, engine,
                               noise_mode, record_noise)


def run_factory(target, arrivals, cfg: LinkConfig, rng=None, *, engine: str = "tableau",
                noise_mode: str = "batched", record_noise: bool = False) -> ProtocolRun:
    """Wait for every link, build the target on auxiliary qubits, teleport it out."""
    target = as_target(target)
    n = target.n
    arrivals = _check_arrivals(arrivals, n)
    _check_cfg(cfg, n)
    streams = TrialStreams.coerce(rng)
    sess = _Session(n, 3 * n, cfg, streams, engine, noise_mode, record_noise)
    reg = sess.register
    for r, nodes in _schedule(arrivals):
        sess.tick(r)
        for i in nodes:
            sess.link(i)
    aux = [2 * n + i for i in range(1, n + 1)]
    target.prepare(reg, aux)
    for i in range(1, n + 1):
        a, m = 2 * n + i, n + i
        sx = sess.measure({a: "X", m: "X"}, f"XX a{i} m{i}")
        sz = sess.measure({a: "Z", m: "Z"}, f"ZZ a{i} m{i}")
        if sz == -1:
            reg.pauli("X", i)
        if sx == -1:
            reg.pauli("Z", i)
        sess.ledger.release(m, sess.round)
    return sess.finish("factory", target, arrivals)


def run_protocol(protocol: str, target, arrivals, cfg: LinkConfig, rng=None, *, catalog=None,
                 engine: str = "tableau", piecemaker_qubit: str = "explicit",
                 noise_mode: str = "batched", record_noise: bool = False) -> ProtocolRun:
    """Dispatch by protocol name."""
    target = as_target(target)
    kw = dict(engine=engine, noise_mode=noise_mode, record_noise=record_noise)
    if protocol == "ghz-piecemaker":
        if not target.is_ghz:
            raise ProtocolError("ghz-piecemaker only distributes GHZ targets")
        return run_ghz_piecemaker(target.n, arrivals, cfg, rng, piecemaker_qubit=piecemaker_qubit, **kw)
    if protocol == "mvc":
        return run_mvc(target, arrivals, cfg, rng, **kw)
    if protocol == "general-piecemaker":
        if catalog is None:
            raise ProtocolError("general-piecemaker needs a cover catalog")
        return run_general_piecemaker(target, catalog, arrivals, cfg, rng, **kw)
    if protocol == "factory":
        return run_factory(target, arrivals, cfg, rng, **kw)
    raise ProtocolError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
