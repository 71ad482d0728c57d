import itertools

import numpy as np
import pytest

import dense
from piecemaker.frame import PauliFrame
from piecemaker.graphs import Graph, make_graph, minimal_local_covers
from piecemaker.network import LinkConfig, MemoryLedger
from piecemaker.protocols import (ProtocolError, Target, TrialStreams, fuse, measure_generator, run_factory,
                                  run_general_piecemaker, run_ghz_piecemaker, run_mvc, run_protocol)
from piecemaker.stabilizer import StabilizerState, ghz_state, graph_state, overlap_sq, restrict


class Scripted:
    """Stand-in random stream that yields the requested measurement outcomes."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)

    def random(self):
        return 0.25 if self.outcomes.pop(0) == 1 else 0.75


def bell_vector():
    return dense.ghz_vector(2)


# -- fusion --------------------------------------------------------------

@pytest.mark.parametrize("s", [0, 1])
@pytest.mark.parametrize("correct", [True, False])
def test_fuse_plus_with_bell_pair(s, correct):
    # qubits: a1 = 1, b1 = 2, b2 = 3
    tab = StabilizerState(3)
    tab.h(1)
    tab.bell_pair(2, 3)
    psi = dense.apply_gate(dense.zero(3), 3, "H", 1)
    psi = dense.apply_gate(dense.apply_gate(psi, 3, "H", 2), 3, "CX", 2, 3)
    psi = dense.apply_gate(psi, 3, "CX", 1, 2)
    psi = dense.project(psi, 3, {2: "Z"}, 1 if s == 0 else -1)
    psi /= np.linalg.norm(psi)
    if s and correct:
        psi = dense.apply_gate(psi, 3, "X", 3)
    if correct:
        out, _ = fuse(tab, 1, 2, 3, Scripted([1 if s == 0 else -1]))
        assert out == s
    else:
        tab.cx(1, 2)
        tab.measure_letters({2: "Z"}, Scripted([1 if s == 0 else -1]))
    f_dense = dense.fidelity(psi, 3, [1, 3], bell_vector())
    f_tab = overlap_sq(restrict(tab, [1, 3]), ghz_state(2))
    assert f_tab == pytest.approx(f_dense, abs=1e-12)
    assert f_tab == (1.0 if (correct or s == 0) else 0.0)


@pytest.mark.parametrize("s", [0, 1])
def test_fuse_extends_ghz(s):
    # GHZ on (1, 2); Bell on (3, 4); fuse a1 = 1, b1 = 3, b2 = 4
    tab = ghz_state(2)
    big = StabilizerState(4)
    big.h(1)
    big.cx(1, 2)
    big.bell_pair(3, 4)
    assert overlap_sq(restrict(big, [1, 2]), tab) == 1
    fuse(big, 1, 3, 4, Scripted([1 if s == 0 else -1]))
    assert overlap_sq(restrict(big, [1, 2, 4]), ghz_state(3)) == 1


def test_fuse_without_correction_breaks_ghz():
    big = StabilizerState(4)
    big.h(1)
    big.cx(1, 2)
    big.bell_pair(3, 4)
    big.cx(1, 3)
    assert big.measure_letters({3: "Z"}, Scripted([-1])) == -1
    assert overlap_sq(restrict(big, [1, 2, 4]), ghz_state(3)) == 0


def test_fuse_rejects_consumed_and_repeated_qubits():
    st_ = StabilizerState(3)
    led = MemoryLedger()
    for q in (1, 2, 3):
        led.store(q, 0)
    fuse(st_, 1, 2, 3, np.random.default_rng(0), ledger=led, round_=0)
    assert not led.is_live(2)
    with pytest.raises(ProtocolError):
        fuse(st_, 1, 2, 3, np.random.default_rng(0), ledger=led, round_=0)
    with pytest.raises(ProtocolError):
        fuse(st_, 1, 1, 3)


# -- stabilizer measurement at the switch --------------------------------

def links_state(n):
    """Bell pairs between switch memory m_i = n + i and end node l_i = i."""
    tab = StabilizerState(2 * n)
    psi = dense.zero(2 * n)
    for i in range(1, n + 1):
        tab.bell_pair(n + i, i)
        psi = dense.apply_gate(psi, 2 * n, "H", n + i)
        psi = dense.apply_gate(psi, 2 * n, "CX", n + i, i)
    return tab, psi


def dense_measure_generator(psi, n, graph, v, applied, outcome, correct=True):
    for u in sorted(graph.neighbors(v)):
        e = (min(u, v), max(u, v))
        if e not in applied:
            psi = dense.apply_gate(psi, 2 * n, "CZ", n + v, n + u)
            applied.add(e)
    psi = dense.project(psi, 2 * n, {n + v: "X"}, outcome)
    psi = psi / np.linalg.norm(psi)
    if outcome == -1 and correct:
        psi = dense.apply_gate(psi, 2 * n, "Z", v)
    return psi


@pytest.mark.parametrize("graph", [make_graph("path", 3), make_graph("path", 4), make_graph("star", 4),
                                   make_graph("cycle", 4), make_graph("complete", 3)],
                         ids=["path3", "path4", "star4", "cycle4", "k3"])
@pytest.mark.parametrize("seed", range(4))
def test_measure_generator_matches_dense(graph, seed):
    rng = np.random.default_rng(seed)
    n = graph.n
    tab, psi = links_state(n)
    order = list(rng.permutation(np.arange(1, n + 1)))
    outcomes = [int(rng.choice([1, -1])) for _ in order]
    applied_t, applied_d = set(), set()
    for v, o in zip(order, outcomes):
        out, _, _ = measure_generator(tab, graph, int(v), applied_t, Scripted([o]))
        assert out == o
        psi = dense_measure_generator(psi, n, graph, int(v), applied_d, o)
    target = dense.graph_vector(n, graph.sorted_edges())
    f_dense = dense.fidelity(psi, 2 * n, list(range(1, n + 1)), target)
    f_tab = overlap_sq(restrict(tab, range(1, n + 1)), graph_state(graph))
    assert f_tab == pytest.approx(f_dense, abs=1e-12) == pytest.approx(1.0)


@pytest.mark.parametrize("v", [1, 2, 3])
def test_measure_generator_minus_one_without_correction(v):
    graph = make_graph("path", 3)
    n = 3
    tab, psi = links_state(n)
    applied_t, applied_d = set(), set()
    for u in (1, 2, 3):
        o = -1 if u == v else 1
        measure_generator(tab, graph, u, applied_t, Scripted([o]), correct=(u != v))
        psi = dense_measure_generator(psi, n, graph, u, applied_d, o, correct=(u != v))
    f_dense = dense.fidelity(psi, 2 * n, [1, 2, 3], dense.graph_vector(3, graph.sorted_edges()))
    assert overlap_sq(restrict(tab, [1, 2, 3]), graph_state(graph)) == pytest.approx(f_dense) == 0.0


def test_measure_generator_counts_cz_once():
    g = make_graph("path", 4)
    tab, _ = links_state(4)
    applied = set()
    rng = np.random.default_rng(0)
    measure_generator(tab, g, 4, applied, rng, live={3, 4})
    assert applied == {(3, 4)}
    measure_generator(tab, g, 3, applied, rng, live={2, 3})
    assert applied == {(3, 4), (2, 3)}


def test_measure_generator_precondition():
    g = make_graph("path", 3)
    tab, _ = links_state(3)
    with pytest.raises(ProtocolError):
        measure_generator(tab, g, 2, set(), np.random.default_rng(0), live={2, 3})
    with pytest.raises(ProtocolError):
        measure_generator(tab, g, 1, set(), np.random.default_rng(0), live={2})


# -- protocol drivers ----------------------------------------------------

CATALOGS = {}


def catalog(graph):
    if graph not in CATALOGS:
        CATALOGS[graph] = minimal_local_covers(graph)
    return CATALOGS[graph]


GRAPHS = [make_graph("path", 4), make_graph("cycle", 5), make_graph("star", 5), make_graph("complete", 4),
          make_graph("grid", rows=2, cols=3), make_graph("wheel", 6), Graph(3), make_graph("custom", 5, edges=[(1, 2)])]


@pytest.mark.parametrize("graph", GRAPHS, ids=lambda g: repr(g)[:30])
@pytest.mark.parametrize("protocol", ["mvc", "general-piecemaker", "factory"])
def test_noiseless_graph_protocols(graph, protocol):
    rng = np.random.default_rng(1)
    cfg = LinkConfig.homogeneous(graph.n, 0.5)
    for trial in range(40):
        arr = rng.integers(1, 5, size=graph.n)
        run = run_protocol(protocol, Target.of(graph), arr, cfg, TrialStreams.derive(trial),
                           catalog=catalog(graph))
        assert run.fidelity() == 1.0
        assert run.completion_round == arr.max()
        assert overlap_sq(run.end_state(), graph_state(graph)) == 1.0


@pytest.mark.parametrize("n", [2, 3, 6])
@pytest.mark.parametrize("hub", ["explicit", "virtual"])
def test_noiseless_ghz_piecemaker(n, hub):
    cfg = LinkConfig.homogeneous(n, 0.5)
    for arr in itertools.product(range(1, 4), repeat=min(n, 3)):
        arr = list(arr) + [1] * (n - len(arr))
        run = run_ghz_piecemaker(n, arr, cfg, TrialStreams.derive(sum(arr)), piecemaker_qubit=hub)
        assert run.fidelity() == 1.0
        assert overlap_sq(run.end_state(), ghz_state(n)) == 1.0
        assert run.completion_round == max(arr)


def test_switch_measurements_are_all_random():
    """The frame engine relies on every switch measurement being a fair coin."""
    calls = []
    orig = StabilizerState.measure

    def spy(self, observable, rng=None, forced=None):
        out = orig(self, observable, rng, forced)
        if forced is None:
            calls.append(out[1])
        return out

    StabilizerState.measure = spy
    try:
        rng = np.random.default_rng(3)
        for graph in GRAPHS[:6]:
            cfg = LinkConfig.homogeneous(graph.n, 0.5)
            for trial in range(10):
                arr = rng.integers(1, 5, size=graph.n)
                for proto in ("mvc", "general-piecemaker", "factory"):
                    run_protocol(proto, Target.of(graph), arr, cfg, trial, catalog=catalog(graph))
        for trial in range(10):
            run_ghz_piecemaker(4, rng.integers(1, 5, size=4), LinkConfig.homogeneous(4, 0.5), trial)
    finally:
        StabilizerState.measure = orig
    assert calls and all(calls)


@pytest.mark.parametrize("protocol", ["ghz-piecemaker", "mvc", "general-piecemaker", "factory"])
def test_tableau_and_frame_agree_under_noise(protocol):
    graph = make_graph("star", 4) if protocol == "ghz-piecemaker" else make_graph("cycle", 5)
    target = Target.ghz(4) if protocol == "ghz-piecemaker" else Target.of(graph)
    cfg = LinkConfig.homogeneous(target.n, 0.4, 0.15)
    rng = np.random.default_rng(9)
    for trial in range(60):
        arr = rng.integers(1, 7, size=target.n)
        f = [run_protocol(protocol, target, arr, cfg, TrialStreams.derive(trial), catalog=catalog(graph),
                          engine=e).fidelity() for e in ("tableau", "frame")]
        assert f[0] == f[1]
        assert f[0] in (0.0, 1.0)


def test_mvc_path4_example():
    run = run_mvc(make_graph("path", 4), [2, 3, 1, 1], LinkConfig.homogeneous(4, 0.5), 0)
    assert run.cover == {1, 3} and run.cover_round == 2
    rounds = run.measured_rounds()
    assert rounds["K_4"] == 2
    assert rounds["K_1"] == rounds["K_2"] == rounds["K_3"] == 3
    assert run.fidelity() == 1.0


def test_general_piecemaker_path4_example():
    g = make_graph("path", 4)
    run = run_general_piecemaker(g, catalog(g), [2, 3, 1, 1], LinkConfig.homogeneous(4, 0.5), 0)
    assert run.cover == {3, 4} and run.cover_round == 1
    rounds = run.measured_rounds()
    assert rounds["K_1"] == 2 and rounds["K_2"] == 3
    assert run.fidelity() == 1.0


def test_all_arrivals_in_round_one_are_noise_free():
    cfg = LinkConfig.homogeneous(4, 0.5, 0.9)
    g = make_graph("cycle", 4)
    for trial in range(20):
        assert run_ghz_piecemaker(4, [1] * 4, cfg, trial).fidelity() == 1.0
        assert run_factory(Target.ghz(4), [1] * 4, cfg, trial).fidelity() == 1.0
        assert run_general_piecemaker(g, catalog(g), [1] * 4, cfg, trial).fidelity() == 1.0
        r = run_mvc(g, [1] * 4, cfg, trial)
        assert r.fidelity() == 1.0 and r.exposures == 0


def test_exposure_bookkeeping():
    arr = [3, 1, 4]
    cfg = LinkConfig.homogeneous(3, 0.5, 0.1)
    pm = run_ghz_piecemaker(3, arr, cfg, 0, engine="frame")
    fac = run_factory(Target.ghz(3), arr, cfg, 0, engine="frame")
    # end nodes idle until round 4, hub from round 1 to 4
    assert pm.exposures == (1 + 3 + 0) + 3
    assert fac.exposures == 2 * (1 + 3 + 0)


def test_mvc_on_complete_graph_waits_like_factory():
    g = make_graph("complete", 5)
    cfg = LinkConfig.homogeneous(5, 0.5, 0.1)
    rng = np.random.default_rng(4)
    for trial in range(30):
        arr = rng.integers(1, 6, size=5)
        mvc = run_mvc(g, arr, cfg, trial, engine="frame")
        fac = run_factory(Target.of(g), arr, cfg, trial, engine="frame")
        # n - 1 vertices already cover K_n, but nothing can be measured before the last link
        assert mvc.cover_round == np.sort(arr)[-2]
        assert set(mvc.measured_rounds().values()) == {arr.max()}
        assert mvc.exposures == fac.exposures


def test_general_piecemaker_on_star_behaves_like_ghz_piecemaker():
    g = make_graph("star", 5)
    cfg = LinkConfig.homogeneous(5, 0.5, 0.1)
    rng = np.random.default_rng(5)
    for trial in range(50):
        arr = rng.integers(1, 6, size=5)
        gp = run_general_piecemaker(g, catalog(g), arr, cfg, trial, engine="frame")
        pm = run_ghz_piecemaker(5, arr, cfg, trial, engine="frame")
        assert gp.exposures == pm.exposures
        first = sorted(v for v in range(1, 6) if arr[v - 1] == arr.min())[0]
        assert gp.cover == {first} and gp.cover_round == arr.min()


def test_virtual_hub_matches_explicit_exposures():
    cfg = LinkConfig.homogeneous(4, 0.5, 0.2)
    for arr in ([1, 2, 3, 4], [2, 2, 5, 1]):
        a = run_ghz_piecemaker(4, arr, cfg, 0, engine="frame")
        b = run_ghz_piecemaker(4, arr, cfg, 0, engine="frame", piecemaker_qubit="virtual")
        assert a.exposures == b.exposures


def test_protocol_errors():
    cfg = LinkConfig.homogeneous(3, 0.5)
    with pytest.raises(ProtocolError):
        run_ghz_piecemaker(1, [1], LinkConfig.homogeneous(1, 0.5), 0)
    with pytest.raises(ProtocolError):
        run_ghz_piecemaker(3, [1, 2], cfg, 0)
    with pytest.raises(ProtocolError):
        run_ghz_piecemaker(3, [0, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_ghz_piecemaker(3, [1, 1, 1], cfg, 0, piecemaker_qubit="ghost")
    with pytest.raises(ProtocolError):
        run_mvc(Target.ghz(3), [1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_general_piecemaker(make_graph("path", 3), catalog(make_graph("star", 3)), [1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_protocol("ghz-piecemaker", make_graph("path", 3), [1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_protocol("teleport", make_graph("path", 3), [1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_protocol("general-piecemaker", make_graph("path", 3), [1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_factory(make_graph("path", 4), [1, 1, 1, 1], cfg, 0)
    with pytest.raises(ProtocolError):
        run_factory(make_graph("path", 3), [1, 1, 1], cfg, 0, engine="frame").end_state()


def test_ghz_target():
    t = Target.ghz(4)
    assert t.is_ghz and not Target.of(make_graph("star", 4)).is_ghz
    assert overlap_sq(t.state(), ghz_state(4)) == 1
    with pytest.raises(ValueError):
        Target.ghz(1)


def test_frame_gates_follow_conjugation():
    f = PauliFrame(2)
    f.pauli("X", 1)
    f.cx(1, 2)
    assert (f.letter(1), f.letter(2)) == ("X", "X")
    f.h(2)
    assert f.letter(2) == "Z"
    f.cz(1, 2)
    assert f.letter(2) == "I" and f.letter(1) == "X"
    assert f.measure_letters({1: "Z"}) == -1 and f.measure_letters({1: "X"}) == 1
    f.s(1)
    assert f.letter(1) == "Y"
