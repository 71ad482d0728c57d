"""Vectorised trial batches for GHZ Piecemaker and Factory.

Both protocols have a closed-form Pauli-frame propagation, so a batch of
trials reduces to a few numpy operations.  The ``*_success`` cores take the
noise as explicit bits; the batch drivers sample those bits.  The cores are
cross-checked trial-by-trial against the gate-level frame engine in the
tests, with the engine's recorded noise fed in.

Frame propagation used here:

* GHZ Piecemaker: an X on the hub between two arrival rounds is copied by
  the following fusions onto every later link's end node; a Z on the hub
  flips the final X measurement and so lands on end node 1.  Switch memories
  are measured in their arrival round and see no noise.
* Factory: teleportation moves the Pauli on memory ``m_i`` onto ``l_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import LinkConfig, sample_pauli_array


@dataclass
class Batch:
    """Per-trial results of one batch."""

    fidelity: np.ndarray
    completion_round: np.ndarray
    exposures: np.ndarray


def sample_arrival_matrix(cfg: LinkConfig, size: int, rng: np.random.Generator) -> np.ndarray:
    """``(size, n)`` arrival rounds, one geometric draw per node per trial."""
    return rng.geometric(np.asarray(cfg.p_link), size=(size, cfg.n))


def frames_pass(x: np.ndarray, z: np.ndarray, gen_x: np.ndarray, gen_z: np.ndarray) -> np.ndarray:
    """Rows of ``(x, z)`` that commute with every generator."""
    x = x.astype(np.int64)
    z = z.astype(np.int64)
    anti = (z @ gen_x.T.astype(np.int64) + x @ gen_z.T.astype(np.int64)) % 2
    return ~anti.any(axis=1)


def ghz_piecemaker_frames(arrivals: np.ndarray, lx, lz, gap_x, gap_z) -> tuple[np.ndarray, np.ndarray]:
    """End-node frame after GHZ Piecemaker.

    ``gap_x[:, p]`` is the hub's X bit for the stretch between the ``p``-th and
    ``p+1``-th smallest arrival round (identity when those rounds coincide).
    """
    arrivals = np.asarray(arrivals)
    order = np.argsort(arrivals, axis=1, kind="stable")
    b, n = arrivals.shape
    cum = np.zeros((b, n), dtype=bool)
    if n > 1:
        cum[:, 1:] = np.logical_xor.accumulate(np.asarray(gap_x, dtype=bool), axis=1)
    hub_x = np.empty_like(cum)
    np.put_along_axis(hub_x, order, cum, axis=1)
    x = np.asarray(lx, dtype=bool) ^ hub_x
    z = np.asarray(lz, dtype=bool).copy()
    z[:, 0] ^= np.logical_xor.reduce(np.asarray(gap_z, dtype=bool), axis=1) if n > 1 else False
    return x, z


def ghz_generator_bits(n: int) -> tuple[np.ndarray, np.ndarray]:
    """X on all qubits, and Z_1 Z_i for i = 2..n."""
    gx = np.zeros((n, n), dtype=bool)
    gz = np.zeros((n, n), dtype=bool)
    gx[0, :] = True
    for i in range(1, n):
        gz[i, 0] = gz[i, i] = True
    return gx, gz


def ghz_piecemaker_success(arrivals, lx, lz, gap_x, gap_z) -> np.ndarray:
    x, z = ghz_piecemaker_frames(arrivals, lx, lz, gap_x, gap_z)
    gx, gz = ghz_generator_bits(x.shape[1])
    return frames_pass(x, z, gx, gz)


def factory_success(lx, lz, mx, mz, gen_x, gen_z) -> np.ndarray:
    x = np.asarray(lx, dtype=bool) ^ np.asarray(mx, dtype=bool)
    z = np.asarray(lz, dtype=bool) ^ np.asarray(mz, dtype=bool)
    return frames_pass(x, z, gen_x, gen_z)


def ghz_piecemaker_batch(arrivals: np.ndarray, p_depol: float, rng: np.random.Generator) -> Batch:
    arrivals = np.asarray(arrivals)
    last = arrivals.max(axis=1)
    first = arrivals.min(axis=1)
    idle = last[:, None] - arrivals
    lx, lz = sample_pauli_array(p_depol, idle, rng)
    sorted_t = np.sort(arrivals, axis=1)
    gaps = np.diff(sorted_t, axis=1)
    gap_x, gap_z = sample_pauli_array(p_depol, gaps, rng)
    ok = ghz_piecemaker_success(arrivals, lx, lz, gap_x, gap_z)
    exposures = idle.sum(axis=1) + (last - first)
    return Batch(ok.astype(float), last, exposures)


def factory_batch(arrivals: np.ndarray, p_depol: float, gen_x: np.ndarray, gen_z: np.ndarray,
                  rng: np.random.Generator) -> Batch:
    arrivals = np.asarray(arrivals)
    last = arrivals.max(axis=1)
    idle = last[:, None] - arrivals
    lx, lz = sample_pauli_array(p_depol, idle, rng)
    mx, mz = sample_pauli_array(p_depol, idle, rng)
    ok = factory_success(lx, lz, mx, mz, gen_x, gen_z)
    return Batch(ok.astype(float), last, 2 * idle.sum(axis=1))
