"""Pure stabilizer states under Clifford gates, Pauli errors and Pauli measurements.

The tableau follows Aaronson and Gottesman: rows ``0..n-1`` are destabilizers,
rows ``n..2n-1`` stabilizers, each row a pair of bit vectors plus a sign bit.
A ``(x, z) = (1, 1)`` entry denotes ``Y`` (not ``XZ``).

Qubits are addressed 1-based in every public function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

_LETTERS = "IXYZ"
_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_LETTER_OF = {bits: letter for letter, bits in ((k, (bool(v[0]), bool(v[1]))) for k, v in _BITS.items())}
_PHASES = {0: "+", 1: "+i", 2: "-", 3: "-i"}

SINGLE_QUBIT_GATES = ("H", "S", "SDG", "SX", "SXDG", "X", "Y", "Z")
TWO_QUBIT_GATES = ("CX", "CZ")
_GATE_ALIASES = {"S†": "SDG", "√X": "SX", "√X†": "SXDG", "CNOT": "CX", "SQRT_X": "SX", "SQRT_X_DAG": "SXDG"}


class StabilizerError(ValueError):
    pass


@dataclass
class PauliOperator:
    """An n-qubit Pauli string with a phase ``i**phase``."""

    xs: np.ndarray
    zs: np.ndarray
    phase: int = 0

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=bool).copy()
        self.zs = np.asarray(self.zs, dtype=bool).copy()
        if self.xs.shape != self.zs.shape or self.xs.ndim != 1:
            raise StabilizerError("x and z parts must be equal-length vectors")
        self.phase %= 4

    @property
    def n(self) -> int:
        return len(self.xs)

    @classmethod
    def from_string(cls, text: str) -> PauliOperator:
        """Parse ``"+XZI"``, ``"-iYY"`` or ``"XX"``."""
        text = text.strip()
        phase = 0
        for prefix, k in (("+i", 1), ("-i", 3), ("+", 0), ("-", 2), ("i", 1)):
            if text.startswith(prefix):
                phase = k
                text = text[len(prefix):]
                break
        if not text or any(c not in _LETTERS for c in text):
            raise StabilizerError(f"bad Pauli string {text!r}")
        xs = [_BITS[c][0] for c in text]
        zs = [_BITS[c][1] for c in text]
        return cls(np.array(xs), np.array(zs), phase)

    @classmethod
    def from_dict(cls, n: int, letters: Mapping[int, str], sign: int = +1) -> PauliOperator:
        """Build from ``{qubit (1-based): letter}``; unlisted qubits get ``I``."""
        xs = np.zeros(n, dtype=bool)
        zs = np.zeros(n, dtype=bool)
        for q, letter in letters.items():
            if not 1 <= q <= n:
                raise StabilizerError(f"qubit {q} out of range 1..{n}")
            xs[q - 1], zs[q - 1] = _BITS[letter]
        if sign not in (1, -1):
            raise StabilizerError("sign must be +1 or -1")
        return cls(xs, zs, 0 if sign == 1 else 2)

    def letters(self) -> str:
        return "".join(_LETTER_OF[(bool(x), bool(z))] for x, z in zip(self.xs, self.zs))

    def __str__(self) -> str:
        return _PHASES[self.phase] + self.letters()

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return (self.phase == other.phase and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.zs, other.zs))

    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    @property
    def sign(self) -> int:
        if not self.is_hermitian():
            raise StabilizerError(f"{self} is not Hermitian")
        return 1 if self.phase == 0 else -1

    def commutes(self, other: PauliOperator) -> bool:
        return not (np.count_nonzero(self.xs & other.zs) + np.count_nonzero(self.zs & other.xs)) % 2

    def __mul__(self, other: PauliOperator) -> PauliOperator:
        if self.n != other.n:
            raise StabilizerError("qubit count mismatch")
        k = self.phase + other.phase + int(_g(self.xs, self.zs, other.xs, other.zs).sum())
        return PauliOperator(self.xs ^ other.xs, self.zs ^ other.zs, k)

    def __neg__(self) -> PauliOperator:
        return PauliOperator(self.xs, self.zs, self.phase + 2)


def _g(x1, z1, x2, z2):
    """Exponent of i picked up when multiplying single-qubit Paulis (x1,z1)*(x2,z2)."""
    x1 = np.asarray(x1, dtype=np.int8)
    z1 = np.asarray(z1, dtype=np.int8)
    x2 = np.asarray(x2, dtype=np.int8)
    z2 = np.asarray(z2, dtype=np.int8)
    # Y*: z2 - x2;  X*: z2 (2 x2 - 1);  Z*: x2 (1 - 2 z2)
    return (x1 * z1 * (z2 - x2) + x1 * (1 - z1) * z2 * (2 * x2 - 1)
            + (1 - x1) * z1 * x2 * (1 - 2 * z2))


class StabilizerState:
    """Mutable n-qubit stabilizer state, initialised to ``|0...0>``."""

    def __init__(self, n: int):
        if n < 1:
            raise StabilizerError("a state needs at least one qubit")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=bool)
        self.z = np.zeros((2 * n, n), dtype=bool)
        self.r = np.zeros(2 * n, dtype=bool)
        idx = np.arange(n)
        self.x[idx, idx] = True
        self.z[n + idx, idx] = True

    def copy(self) -> StabilizerState:
        other = StabilizerState.__new__(StabilizerState)
        other.n = self.n
        other.x = self.x.copy()
        other.z = self.z.copy()
        other.r = self.r.copy()
        return other

    # -- indexing -----------------------------------------------------------
    def _q(self, q: int) -> int:
        if not isinstance(q, (int, np.integer)) or not 1 <= q <= self.n:
            raise StabilizerError(f"qubit {q!r} out of range 1..{self.n}")
        return int(q) - 1

    # -- single-qubit gates -------------------------------------------------
    def h(self, q: int):
        a = self._q(q)
        xa, za = self.x[:, a].copy(), self.z[:, a].copy()
        self.r ^= xa & za
        self.x[:, a], self.z[:, a] = za, xa

    def s(self, q: int):
        a = self._q(q)
        self.r ^= self.x[:, a] & self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def sdg(self, q: int):
        a = self._q(q)
        self.r ^= self.x[:, a] & ~self.z[:, a]
        self.z[:, a] ^= self.x[:, a]

    def sx(self, q: int):
        a = self._q(q)
        self.r ^= self.z[:, a] & ~self.x[:, a]
        self.x[:, a] ^= self.z[:, a]

    def sxdg(self, q: int):
        a = self._q(q)
        self.r ^= self.z[:, a] & self.x[:, a]
        self.x[:, a] ^= self.z[:, a]

    def pauli(self, letter: str, q: int):
        a = self._q(q)
        if letter == "X":
            self.r ^= self.z[:, a]
        elif letter == "Z":
            self.r ^= self.x[:, a]
        elif letter == "Y":
            self.r ^= self.x[:, a] ^ self.z[:, a]
        elif letter != "I":
            raise StabilizerError(f"unknown Pauli {letter!r}")

    # -- two-qubit gates ----------------------------------------------------
    def _pair(self, c: int, t: int) -> tuple[int, int]:
        a, b = self._q(c), self._q(t)
        if a == b:
            raise StabilizerError("two-qubit gate needs distinct qubits")
        return a, b

    def cx(self, c: int, t: int):
        a, b = self._pair(c, t)
        self.r ^= self.x[:, a] & self.z[:, b] & ~(self.x[:, b] ^ self.z[:, a])
        self.x[:, b] ^= self.x[:, a]
        self.z[:, a] ^= self.z[:, b]

    def cz(self, c: int, t: int):
        a, b = self._pair(c, t)
        self.r ^= self.x[:, a] & self.x[:, b] & (self.z[:, a] ^ self.z[:, b])
        self.z[:, a] ^= self.x[:, b]
        self.z[:, b] ^= self.x[:, a]

    # -- preparation helpers -----------------------------------------------
    def reset_plus(self, q: int):
        """Prepare a qubit known to be in |0> (untouched so far) in |+>."""
        self.h(q)

    def bell_pair(self, a: int, b: int):
        """Turn two untouched |0> qubits into (|00> + |11>)/sqrt(2)."""
        self.h(a)
        self.cx(a, b)

    # -- row arithmetic -----------------------------------------------------
    def _anticommuting_rows(self, px: np.ndarray, pz: np.ndarray) -> np.ndarray:
        return ((self.x & pz).sum(axis=1) + (self.z & px).sum(axis=1)) % 2 == 1

    def _deterministic_sign(self, px, pz, phase: int) -> int:
        """Eigenvalue of the Hermitian Pauli (px, pz, phase) known to be in +-S."""
        n = self.n
        rows = n + np.flatnonzero(self._anticommuting_rows(px, pz)[:n])
        if len(rows):
            # running product before each factor is an exclusive prefix XOR
            cx = np.logical_xor.accumulate(self.x[rows], axis=0)
            cz = np.logical_xor.accumulate(self.z[rows], axis=0)
            before_x = np.vstack([np.zeros((1, n), dtype=bool), cx[:-1]])
            before_z = np.vstack([np.zeros((1, n), dtype=bool), cz[:-1]])
            k = 2 * int(self.r[rows].sum()) + int(_g(self.x[rows], self.z[rows], before_x, before_z).sum())
            acc_x, acc_z = cx[-1], cz[-1]
        else:
            k = 0
            acc_x = acc_z = np.zeros(n, dtype=bool)
        if not (np.array_equal(acc_x, px) and np.array_equal(acc_z, pz)):
            raise StabilizerError("internal error: observable not in stabilizer group")
        # product of generators = i**k * P_bits ; observable = i**phase * P_bits
        return 1 if (k - phase) % 4 == 0 else -1

    def measure(self, observable: PauliOperator, rng: np.random.Generator | None = None,
                forced: int | None = None) -> tuple[int, bool]:
        """Measure a Hermitian Pauli; returns ``(outcome, was_random)``.

        ``forced`` fixes the outcome of a random measurement (used for
        projections and tests); it is ignored for deterministic ones.
        """
        if observable.n != self.n:
            raise StabilizerError(f"observable acts on {observable.n} qubits, state has {self.n}")
        if not observable.is_hermitian():
            raise StabilizerError(f"observable {observable} is not Hermitian")
        n = self.n
        px, pz = observable.xs, observable.zs
        anti = self._anticommuting_rows(px, pz)
        stab_anti = np.flatnonzero(anti[n:])
        if len(stab_anti) == 0:
            return self._deterministic_sign(px, pz, observable.phase), False
        p = n + int(stab_anti[0])
        rows = np.flatnonzero(anti)
        rows = rows[rows != p]
        if len(rows):
            # every anticommuting row h <- row p * row h, in one vectorised step
            k = (2 * self.r[rows].astype(np.int64) + 2 * int(self.r[p])
                 + _g(self.x[p], self.z[p], self.x[rows], self.z[rows]).sum(axis=1))
            self.r[rows] = (k % 4) == 2
            self.x[rows] ^= self.x[p]
            self.z[rows] ^= self.z[p]
        self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
        if forced is None:
            if rng is None:
                raise StabilizerError("random measurement needs a random stream")
            outcome = 1 if rng.random() < 0.5 else -1
        else:
            outcome = forced
        self.x[p] = px
        self.z[p] = pz
        # stored sign bit s means (-1)**s * P_bits; observable = i**phase * P_bits
        self.r[p] = ((observable.phase // 2) + (0 if outcome == 1 else 1)) % 2 == 1
        return outcome, True

    def measure_letters(self, letters: Mapping[int, str], rng=None) -> int:
        """Measure the product of single-qubit Paulis ``{qubit: letter}``."""
        return self.measure(PauliOperator.from_dict(self.n, letters), rng)[0]

    def measure_z(self, q: int, rng=None) -> int:
        return self.measure(PauliOperator.from_dict(self.n, {q: "Z"}), rng)[0]

    def measure_x(self, q: int, rng=None) -> int:
        return self.measure(PauliOperator.from_dict(self.n, {q: "X"}), rng)[0]

    # -- inspection ---------------------------------------------------------
    def generators(self) -> list[PauliOperator]:
        n = self.n
        return [PauliOperator(self.x[n + i], self.z[n + i], 2 if self.r[n + i] else 0)
                for i in range(n)]

    def expectation(self, observable: PauliOperator) -> int:
        """+1 / -1 if +-observable stabilizes the state, else 0."""
        if observable.n != self.n:
            raise StabilizerError("qubit count mismatch")
        anti = self._anticommuting_rows(observable.xs, observable.zs)
        if anti[self.n:].any():
            return 0
        return self._deterministic_sign(observable.xs, observable.zs, observable.phase)

    def stabilizes(self, observable: PauliOperator) -> bool:
        return self.expectation(observable) == 1

    def is_valid(self) -> bool:
        """Check commutation, independence and the symplectic destabilizer pairing."""
        n = self.n
        x = self.x.astype(np.uint8)
        z = self.z.astype(np.uint8)
        omega = (x @ z.T + z @ x.T) % 2
        expected = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        idx = np.arange(n)
        expected[idx, n + idx] = 1
        expected[n + idx, idx] = 1
        return bool(np.array_equal(omega, expected))

    def canonical_generators(self) -> list[PauliOperator]:
        """Reduced row-echelon stabilizer generators (X block first, then Z)."""
        rows = _echelon(self.x[self.n:].copy(), self.z[self.n:].copy(), self.r[self.n:].copy(),
                        list(range(self.n)))
        return [PauliOperator(x, z, 2 if r else 0) for x, z, r in zip(*rows)]

    def __repr__(self) -> str:
        return f"StabilizerState({', '.join(str(g) for g in self.generators())})"


def _echelon(x: np.ndarray, z: np.ndarray, r: np.ndarray, columns: Sequence[int]):
    """Gauss-Jordan over the given column order, X bits then Z bits per column.

    Row multiplications track signs.  Returns the reduced ``(x, z, r)``.
    """
    rows = len(r)
    pivot_row = 0

    def mult(h: int, i: int):
        k = 2 * int(r[h]) + 2 * int(r[i]) + int(_g(x[i], z[i], x[h], z[h]).sum())
        r[h] = (k % 4) == 2
        x[h] ^= x[i]
        z[h] ^= z[i]

    for block in (x, z):
        for c in columns:
            if pivot_row >= rows:
                break
            candidates = [i for i in range(pivot_row, rows) if block[i, c]]
            if not candidates:
                continue
            i0 = candidates[0]
            if i0 != pivot_row:
                x[[i0, pivot_row]] = x[[pivot_row, i0]]
                z[[i0, pivot_row]] = z[[pivot_row, i0]]
                r[[i0, pivot_row]] = r[[pivot_row, i0]]
            for i in range(rows):
                if i != pivot_row and block[i, c]:
                    mult(i, pivot_row)
            pivot_row += 1
    return x, z, r


# ---------------------------------------------------------------------------
# module-level operations


def new_state(n: int) -> StabilizerState:
    """All-zeros state on ``n`` qubits."""
    return StabilizerState(n)


def apply_clifford(state: StabilizerState, gate: str, targets: Sequence[int] | int) -> StabilizerState:
    """Conjugate every generator by ``gate`` acting on ``targets`` (1-based)."""
    gate = _GATE_ALIASES.get(gate, gate).upper()
    if isinstance(targets, (int, np.integer)):
        targets = (int(targets),)
    targets = tuple(targets)
    if len(set(targets)) != len(targets):
        raise StabilizerError(f"duplicate targets {targets}")
    if gate in SINGLE_QUBIT_GATES:
        if len(targets) != 1:
            raise StabilizerError(f"{gate} takes one target")
        (q,) = targets
        if gate in ("X", "Y", "Z"):
            state.pauli(gate, q)
        else:
            getattr(state, gate.lower())(q)
    elif gate in TWO_QUBIT_GATES:
        if len(targets) != 2:
            raise StabilizerError(f"{gate} takes two targets")
        getattr(state, gate.lower())(*targets)
    else:
        raise StabilizerError(f"unsupported gate {gate!r}")
    return state


def measure_pauli(state: StabilizerState, observable: PauliOperator | str,
                  rng: np.random.Generator | None = None) -> tuple[int, StabilizerState]:
    if isinstance(observable, str):
        observable = PauliOperator.from_string(observable)
    outcome, _ = state.measure(observable, rng)
    return outcome, state


def graph_state(graph) -> StabilizerState:
    """``prod CZ_uv |+>^n`` for a graph with 1-based vertices."""
    state = StabilizerState(graph.n)
    for v in range(1, graph.n + 1):
        state.h(v)
    for u, v in sorted(graph.edges):
        state.cz(u, v)
    return state


def ghz_state(n: int) -> StabilizerState:
    """(|0..0> + |1..1>)/sqrt(2)."""
    state = StabilizerState(n)
    state.h(1)
    for q in range(2, n + 1):
        state.cx(1, q)
    return state


def overlap_sq(a: StabilizerState, b: StabilizerState) -> float:
    """Exact ``|<a|b>|^2``: either 0 or a power of two.

    Projects a copy of ``a`` onto each signed generator of ``b``; every random
    projection halves the weight and any deterministic contradiction gives 0.
    """
    if a.n != b.n:
        raise StabilizerError(f"qubit counts differ: {a.n} vs {b.n}")
    work = a.copy()
    halvings = 0
    for gen in b.generators():
        outcome, random = work.measure(gen, forced=1)
        if random:
            halvings += 1
        elif outcome != 1:
            return 0.0
    return 2.0 ** -halvings


def subsystem_fidelity(state: StabilizerState, qubits: Sequence[int], target: StabilizerState) -> float:
    """``<t| rho |t>`` for the reduced state of ``state`` on ``qubits``.

    Projects a copy of ``state`` onto the target generators padded with
    identities; the product of the +1 probabilities is the fidelity.  This
    holds whether or not the subsystem is pure.
    """
    qubits = [state._q(q) for q in qubits]
    if len(qubits) != target.n:
        raise StabilizerError("target size does not match the subsystem")
    work = state.copy()
    halvings = 0
    for gen in target.generators():
        xs = np.zeros(state.n, dtype=bool)
        zs = np.zeros(state.n, dtype=bool)
        xs[qubits] = gen.xs
        zs[qubits] = gen.zs
        outcome, random = work.measure(PauliOperator(xs, zs, gen.phase), forced=1)
        if random:
            halvings += 1
        elif outcome != 1:
            return 0.0
    return 2.0 ** -halvings


def restrict(state: StabilizerState, qubits: Iterable[int]) -> StabilizerState:
    """Return the pure state on ``qubits`` when ``state`` factorises across that cut.

    Raises :class:`StabilizerError` if the subsystem is entangled with the rest.
    The result's qubit ``k`` is the ``k``-th entry of ``qubits``.
    """
    keep = [state._q(q) for q in qubits]
    if len(set(keep)) != len(keep):
        raise StabilizerError("duplicate qubits")
    rest = [c for c in range(state.n) if c not in set(keep)]
    n = state.n
    x, z, r = _echelon(state.x[n:].copy(), state.z[n:].copy(), state.r[n:].copy(), rest)
    local = [i for i in range(n) if not (x[i, rest].any() or z[i, rest].any())]
    if len(local) != len(keep):
        raise StabilizerError(
            f"subsystem of {len(keep)} qubits is entangled with the rest "
            f"({len(local)} local generators)")
    gens = [PauliOperator(x[i, keep], z[i, keep], 2 if r[i] else 0) for i in local]
    return from_generators(gens)


def from_generators(generators: Sequence[PauliOperator]) -> StabilizerState:
    """Build a state from n independent, commuting, Hermitian generators.

    Destabilizers solve ``<d_i, s_j> = delta_ij`` over GF(2); pairwise
    anticommuting destabilizers are then fixed by adding stabilizers.
    """
    n = len(generators)
    if n == 0:
        raise StabilizerError("need at least one generator")
    if any(g.n != n for g in generators):
        raise StabilizerError("need exactly n generators on n qubits")
    sx = np.array([g.xs for g in generators], dtype=np.uint8)
    sz = np.array([g.zs for g in generators], dtype=np.uint8)
    sr = np.array([g.sign == -1 for g in generators], dtype=bool)
    comm = (sx @ sz.T + sz @ sx.T) % 2
    if comm.any():
        i, j = np.argwhere(comm)[0]
        raise StabilizerError(f"generators {i + 1} and {j + 1} anticommute")

    # <v, s_i> = v . (s_z | s_x)
    a = np.concatenate([sz, sx], axis=1)
    aug = np.concatenate([a, np.eye(n, dtype=np.uint8)], axis=1)
    pivots = []
    row = 0
    for c in range(2 * n):
        hits = np.flatnonzero(aug[row:, c]) + row
        if len(hits) == 0:
            continue
        aug[[row, hits[0]]] = aug[[hits[0], row]]
        for i in np.flatnonzero(aug[:, c]):
            if i != row:
                aug[i] ^= aug[row]
        pivots.append(c)
        row += 1
        if row == n:
            break
    if row < n:
        raise StabilizerError("generators are not independent")
    d = np.zeros((n, 2 * n), dtype=np.uint8)
    for r_, c in enumerate(pivots):
        d[:, c] = aug[r_, 2 * n:]
    dx, dz = d[:, :n], d[:, n:]
    for j in range(n):
        for i in range(j):
            if (dx[i] @ dz[j] + dz[i] @ dx[j]) % 2:
                dx[j] ^= sx[i]
                dz[j] ^= sz[i]
    state = StabilizerState.__new__(StabilizerState)
    state.n = n
    state.x = np.concatenate([dx, sx]).astype(bool)
    state.z = np.concatenate([dz, sz]).astype(bool)
    state.r = np.concatenate([np.zeros(n, dtype=bool), sr])
    if not state.is_valid():  # pragma: no cover
        raise StabilizerError("internal: failed to build a valid tableau")
    return state


def is_valid_state(state: StabilizerState) -> bool:
    return state.is_valid()
