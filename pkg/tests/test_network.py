import math

import numpy as np
import pytest

from piecemaker.frame import PauliFrame
from piecemaker.network import (Depolarizer, LinkConfig, MemoryLedger, depol_from_coherence, depolarize_round,
                                heterogeneous_lengths, heterogeneous_link_probabilities,
                                link_probability_from_length, max_arrival_cdf, multiply_letters,
                                pauli_probabilities, sample_arrivals, sample_pauli, sample_pauli_array)


def test_link_config_validation():
    cfg = LinkConfig.homogeneous(3, 0.5, 0.01)
    assert cfg.n == 3 and cfg.p_link == (0.5, 0.5, 0.5)
    for bad in (dict(p_link=(0.0,)), dict(p_link=(1.5,)), dict(p_link=(0.5,), p_depol=-0.1),
                dict(p_link=(0.5,), p_depol=1.1), dict(p_link=()), dict(p_link=(0.5,), delta_t=0),
                dict(p_link=(0.5,), tau=-1)):
        with pytest.raises(ValueError):
            LinkConfig(**bad)
    assert LinkConfig((1.0,), 1.0).p_depol == 1.0


def test_tau_sets_p_depol():
    cfg = LinkConfig((0.5,), delta_t=1.0, tau=100.0)
    assert cfg.p_depol == pytest.approx(1 - math.exp(-0.01))
    assert depol_from_coherence(2.0, 4.0) == pytest.approx(1 - math.exp(-0.5))


def test_fiber_model():
    assert link_probability_from_length(0) == 1.0
    assert link_probability_from_length(50, 0.2) == pytest.approx(0.1)
    assert heterogeneous_lengths(5, 2.0) == [21.0, 23.0, 25.0, 27.0, 29.0]
    assert heterogeneous_lengths(5, 0.0) == [25.0] * 5
    probs = heterogeneous_link_probabilities(5, 0.0)
    assert probs == pytest.approx((10 ** -0.5,) * 5)
    with pytest.raises(ValueError):
        heterogeneous_lengths(5, 20.0)  # node 1 would sit at -15 km
    with pytest.raises(ValueError):
        heterogeneous_lengths(5, -1.0)


def test_arrivals_are_geometric():
    rng = np.random.default_rng(0)
    cfg = LinkConfig((0.3, 0.8))
    draws = np.array([sample_arrivals(cfg, rng) for _ in range(20000)])
    assert draws.min() >= 1
    assert draws.mean(axis=0) == pytest.approx([1 / 0.3, 1 / 0.8], rel=0.03)


def test_max_arrival_cdf():
    assert max_arrival_cdf([0.5, 0.5], 1) == 0.25
    assert max_arrival_cdf([1.0], 1) == 1.0


def test_pauli_probabilities_compose():
    p = 0.1
    one = pauli_probabilities(p, 1)
    assert one == pytest.approx([1 - 3 * p / 4, p / 4, p / 4, p / 4])
    # composing three single rounds by hand (Pauli group is abelian mod phase)
    letters = "IXYZ"
    dist = {"I": 1.0}
    for _ in range(3):
        nxt = {}
        for a, pa in dist.items():
            for b, pb in zip(letters, one):
                c = multiply_letters(a, b)
                nxt[c] = nxt.get(c, 0.0) + pa * pb
        dist = nxt
    assert [dist[c] for c in letters] == pytest.approx(pauli_probabilities(p, 3))
    assert pauli_probabilities(p, 0).tolist() == [1, 0, 0, 0]


def test_sample_pauli_frequencies():
    rng = np.random.default_rng(1)
    n = 40000
    counts = {c: 0 for c in "IXYZ"}
    for _ in range(n):
        counts[sample_pauli(0.2, 3, rng)] += 1
    expect = pauli_probabilities(0.2, 3)
    for c, e in zip("IXYZ", expect):
        assert counts[c] / n == pytest.approx(e, abs=4 * math.sqrt(e * (1 - e) / n))
    assert sample_pauli(0.2, 0, rng) == "I"
    assert sample_pauli(0.0, 5, rng) == "I"


def test_sample_pauli_array_frequencies():
    rng = np.random.default_rng(2)
    rounds = np.full(100000, 4)
    x, z = sample_pauli_array(0.1, rounds, rng)
    freq = [np.mean(~x & ~z), np.mean(x & ~z), np.mean(x & z), np.mean(~x & z)]
    assert freq == pytest.approx(pauli_probabilities(0.1, 4), abs=0.004)
    x0, z0 = sample_pauli_array(0.5, np.zeros(10, dtype=int), rng)
    assert not x0.any() and not z0.any()


def test_ledger_counts_exposures():
    led = MemoryLedger()
    led.store(1, 2)
    led.store(2, 3)
    assert led.live() == [1, 2]
    led.release(1, 5)
    assert not led.is_live(1) and led.exposures == 3
    led.release_all(7)
    assert led.exposures == 7 and led.live() == []
    with pytest.raises(ValueError):
        led.release(1, 8)
    with pytest.raises(ValueError):
        led.store(2, 8)


def test_batched_and_per_round_agree_in_distribution():
    n = 30000
    out = {}
    for mode in ("batched", "per-round"):
        rng = np.random.default_rng(3)
        counts = {c: 0 for c in "IXYZ"}
        for _ in range(n):
            frame = PauliFrame(1)
            led = MemoryLedger()
            led.store(1, 0)
            Depolarizer(0.15, rng, mode).advance(frame, led, 0, 4)
            counts[frame.letter(1)] += 1
        out[mode] = np.array([counts[c] for c in "IXYZ"]) / n
    assert out["batched"] == pytest.approx(out["per-round"], abs=0.012)
    assert out["batched"] == pytest.approx(pauli_probabilities(0.15, 4), abs=0.012)


def test_depolarizer_only_touches_live_qubits_and_records():
    rng = np.random.default_rng(4)
    led = MemoryLedger()
    led.store(1, 0)
    led.store(2, 0)
    led.release(2, 0)
    dep = Depolarizer(1.0, rng, record=True)
    frame = PauliFrame(2)
    dep.advance(frame, led, 0, 3)
    assert [r.qubit for r in dep.records] == [1]
    assert frame.letter(2) == "I"
    with pytest.raises(ValueError):
        Depolarizer(0.1, rng, mode="sometimes")


def test_depolarize_round_single_step():
    rng = np.random.default_rng(5)
    led = MemoryLedger()
    led.store(1, 0)
    hits = 0
    for _ in range(20000):
        f = PauliFrame(1)
        depolarize_round(f, led, 0.4, rng)
        hits += f.letter(1) != "I"
    assert hits / 20000 == pytest.approx(0.3, abs=0.015)
