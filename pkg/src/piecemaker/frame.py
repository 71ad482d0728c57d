"""Pauli-frame register: tracks only the error relative to a noiseless run.

Every switch measurement in the protocols here has a uniformly random ideal
outcome, so the reference run may take +1 everywhere; a measurement then
reports -1 exactly when the frame anticommutes with the observable, and the
protocol's correction for -1 lands in the frame as an extra Pauli.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

_X_BIT = {"I": 0, "X": 1, "Y": 1, "Z": 0}
_Z_BIT = {"I": 0, "X": 0, "Y": 1, "Z": 1}


class PauliFrame:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError("a frame needs at least one qubit")
        self.n = n
        self.x = 0
        self.z = 0

    def _bit(self, q: int) -> int:
        if not 1 <= q <= self.n:
            raise ValueError(f"qubit {q} out of range 1..{self.n}")
        return 1 << (q - 1)

    def h(self, q: int):
        b = self._bit(q)
        xb, zb = self.x & b, self.z & b
        self.x = (self.x & ~b) | zb
        self.z = (self.z & ~b) | xb

    def s(self, q: int):
        b = self._bit(q)
        self.z ^= self.x & b

    sdg = s

    def sx(self, q: int):
        b = self._bit(q)
        self.x ^= self.z & b

    sxdg = sx

    def pauli(self, letter: str, q: int):
        b = self._bit(q)
        if _X_BIT[letter]:
            self.x ^= b
        if _Z_BIT[letter]:
            self.z ^= b

    def cx(self, c: int, t: int):
        bc, bt = self._bit(c), self._bit(t)
        if self.x & bc:
            self.x ^= bt
        if self.z & bt:
            self.z ^= bc

    def cz(self, a: int, b: int):
        ba, bb = self._bit(a), self._bit(b)
        xa, xb = self.x & ba, self.x & bb
        if xb:
            self.z ^= ba
        if xa:
            self.z ^= bb

    def reset_plus(self, q: int):
        pass

    def bell_pair(self, a: int, b: int):
        pass

    def measure_letters(self, letters: Mapping[int, str], rng=None) -> int:
        flips = 0
        for q, letter in letters.items():
            b = self._bit(q)
            if _X_BIT[letter] and self.z & b:
                flips ^= 1
            if _Z_BIT[letter] and self.x & b:
                flips ^= 1
        return -1 if flips else 1

    def letter(self, q: int) -> str:
        b = self._bit(q)
        return {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}[(bool(self.x & b), bool(self.z & b))]

    def restricted_bits(self, qubits) -> tuple[np.ndarray, np.ndarray]:
        xs = np.array([bool(self.x >> (q - 1) & 1) for q in qubits])
        zs = np.array([bool(self.z >> (q - 1) & 1) for q in qubits])
        return xs, zs


def frame_commutes_with(xs: np.ndarray, zs: np.ndarray, gen_x: np.ndarray, gen_z: np.ndarray) -> bool:
    """True when the frame (xs, zs) commutes with every generator row."""
    anti = (gen_x.astype(np.uint8) @ zs.astype(np.uint8) + gen_z.astype(np.uint8) @ xs.astype(np.uint8)) % 2
    return not anti.any()
