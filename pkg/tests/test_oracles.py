"""Monte Carlo estimates against the analytic small-n oracle."""

import itertools

import numpy as np
import pytest

import oracles
from piecemaker.montecarlo import Scenario, run_trials
from piecemaker.network import LinkConfig
from piecemaker.protocols import Target


def test_dense_ranks():
    t = np.array([[1, 1, 2], [3, 1, 3], [2, 5, 1], [4, 4, 4]])
    assert oracles.dense_ranks(t).tolist() == [[0, 0, 1], [1, 0, 1], [1, 2, 0], [0, 0, 0]]


def test_arrival_grid_mass():
    t, prob = oracles.arrival_grid([0.3, 0.5])
    assert t.min() == 1 and prob.sum() == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("proto", ["ghz-piecemaker", "factory"])
@pytest.mark.parametrize("n", [2, 3])
def test_oracle_limits(proto, n):
    assert oracles.oracle_mean_fidelity(proto, n, 0.4, 0.0) == pytest.approx(1.0, abs=1e-7)
    assert oracles.oracle_mean_fidelity(proto, n, 1.0, 0.3) == pytest.approx(1.0)


def test_circuits_without_noise_give_ghz():
    noiseless = frozenset([("l", 1), ("l", 2), ("l", 3), ("gap", 0), ("m", 1), ("m", 2), ("m", 3)])
    assert oracles.piecemaker_circuit(((1,), (2, 3)), noiseless, 3) == pytest.approx(1.0)
    assert oracles.factory_circuit(noiseless, 3) == pytest.approx(1.0)
    # a fully depolarized end node leaves the GHZ fidelity at 1/4 for n = 2
    assert oracles.factory_circuit(frozenset([("l", 2), ("m", 1), ("m", 2)]), 2) == pytest.approx(0.25)


def test_two_nodes_protocols_coincide():
    # with two nodes both protocols leave the same noise on the Bell pair
    a = oracles.oracle_mean_fidelity("ghz-piecemaker", 2, 0.3, 0.05)
    b = oracles.oracle_mean_fidelity("factory", 2, 0.3, 0.05)
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("n,p_link,p_depol,proto", [
    (n, pl, pd, proto) for n, pl, pd, proto in itertools.product(
        (2, 3), (0.3, 0.9), (0.01, 0.1), ("ghz-piecemaker", "factory"))])
def test_batch_matches_oracle(n, p_link, p_depol, proto):
    ref = oracles.oracle_mean_fidelity(proto, n, p_link, p_depol)
    est = run_trials(Scenario(proto, Target.ghz(n), LinkConfig.homogeneous(n, p_link, p_depol), 100_000, seed=3))
    assert abs(est.mean - ref) <= 3 * est.stderr


@pytest.mark.parametrize("proto", ["ghz-piecemaker", "factory"])
def test_frame_engine_matches_oracle(proto):
    ref = oracles.oracle_mean_fidelity(proto, 3, 0.3, 0.1)
    est = run_trials(Scenario(proto, Target.ghz(3), LinkConfig.homogeneous(3, 0.3, 0.1), 4000, seed=5,
                              engine="frame"))
    assert abs(est.mean - ref) <= 3 * est.stderr
