import numpy as np
import pytest

from src.config.experiment import TopologySpec
from src.core.aggregation import VectorAlgebra, regrouped_edge_update
from src.core.experiment import run_experiment
from src.core.protocol import (
    ROUND_ENGINES,
    RoundContext,
    completion_round,
    default_home_cells,
    initial_state,
    marker_propagation_check,
    run_round_fedavg,
    run_round_fedmes,
    run_round_fedoc,
    run_round_fleocd,
    run_round_hfl,
)
from src.core.channel import ChannelParams, sample_compute_times, sample_gains
from src.core.topology import ROC, build_topology, relay_attachment
from tests.conftest import scalar


def _shift_trainer(offsets):
    return lambda k, model, r: model + offsets[k]


def _context(topo, trainer, n=None, kappa=100, **kwargs):
    n = np.ones(topo.num_clients) if n is None else n
    return RoundContext(
        topology=topo,
        sample_counts=n,
        home_cells=default_home_cells(topo),
        trainer=trainer,
        kappa=kappa,
        **kwargs,
    )


def test_regrouped_form_matches_relay_pipeline():
    rng = np.random.default_rng(0)
    algebra = VectorAlgebra()
    for trial in range(50):
        overlaps = [int(rng.integers(1, 4)), int(rng.integers(1, 4))]
        spec = TopologySpec(num_servers=3, num_clients=sum(overlaps) + 6, overlap_sizes=overlaps, balance=False)
        topo = build_topology(spec, rng_seed=trial)
        n = rng.integers(1, 50, size=topo.num_clients).astype(float)
        offsets = rng.normal(size=topo.num_clients)
        trained = {}
        ctx = _context(topo, _shift_trainer(offsets), n=n)
        ctx.observer = lambda r, models: trained.update(models)
        start = tuple(scalar(v) for v in rng.normal(size=3))
        state = initial_state(topo, list(start), n)
        new_state, _ = run_round_fedoc(state, ctx, 0, fastest=False)

        homes = default_home_cells(topo)
        cell_terms = []
        for j in range(3):
            members = [k for k in range(topo.num_clients) if homes[k] == j]
            weight = float(sum(n[k] for k in members))
            cell_terms.append((weight, algebra.combine([(n[k], trained[k]) for k in members])))
        for l in range(3):
            expected = regrouped_edge_update(algebra, l, cell_terms)
            assert new_state.models[l][0] == pytest.approx(expected[0], rel=1e-12, abs=1e-12)


def test_mixing_coefficients_are_a_probability_vector(make_topology):
    topo = make_topology()
    eye = np.eye(topo.num_clients)
    ctx = _context(topo, lambda k, model, r: eye[k], n=np.arange(1, topo.num_clients + 1, dtype=float))
    state = initial_state(topo, np.zeros(topo.num_clients), ctx.sample_counts)
    for fastest in (True, False):
        new_state, _ = run_round_fedoc(state, ctx, 0, fastest=fastest)
        for model in new_state.models:
            assert (model >= 0).all()
            assert abs(model.sum() - 1.0) < 1e-12


def test_identical_models_stay_identical(make_topology):
    topo = make_topology()
    w = scalar(0.37)
    ctx = _context(topo, lambda k, model, r: w, n=np.arange(1, 13, dtype=float))
    state = initial_state(topo, w, ctx.sample_counts)
    for name, engine in ROUND_ENGINES.items():
        if name == "fedavg":
            continue
        new_state, _ = engine(state, ctx, 0)
        assert all(m[0] == 0.37 for m in new_state.models), name


def test_relay_client_does_not_upload_in_fedoc(make_topology):
    topo = make_topology()
    n = np.arange(1, 13, dtype=float)
    ctx = _context(topo, _shift_trainer(np.zeros(12)), n=n)
    state = initial_state(topo, scalar(0.0), n)
    _, trace = run_round_fedoc(state, ctx, 0, fastest=False)
    homes = default_home_cells(topo)
    rocs = set(topo.relay_clients[0] + topo.relay_clients[1])
    for l in range(3):
        expected = sum(n[k] for k in range(12) if homes[k] == l and k not in rocs)
        assert trace.cell_weights[l] == expected


def test_fastest_selection_picks_earliest_model(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.zeros(12)))
    state = initial_state(topo, scalar(0.0), ctx.sample_counts)
    state = state.__class__(state.models, (0.0, 5.0, 0.0), state.es_weights)
    _, trace = run_round_fedoc(state, ctx, 0, fastest=True)
    for k in topo.overlap_clients[0]:
        assert trace.selections.choices[k] == 0
    for k in topo.overlap_clients[1]:
        assert trace.selections.choices[k] == 2


def test_fastest_selection_ties_go_left(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.zeros(12)))
    _, trace = run_round_fedoc(initial_state(topo, scalar(0.0), ctx.sample_counts), ctx, 0)
    for p in range(2):
        for k in topo.overlap_clients[p]:
            assert trace.selections.alpha(k, p) == 1
            assert trace.selections.alpha(k, p + 1) == 0


def test_each_overlap_client_selects_exactly_one_server(make_topology):
    topo = make_topology(num_clients=60, overlap_sizes=(10, 10))
    params = ChannelParams()
    ctx = _context(
        topo, _shift_trainer(np.zeros(60)),
        gains=sample_gains(topo, params, 0), compute_times=sample_compute_times(60, params, 0),
    )
    state = initial_state(topo, scalar(0.0), ctx.sample_counts)
    for r in range(5):
        state, trace = run_round_fedoc(state, ctx, r)
        for p in range(2):
            for k in topo.overlap_clients[p]:
                assert trace.selections.alpha(k, p) + trace.selections.alpha(k, p + 1) == 1


def test_clock_is_monotone_and_cloud_skips_relays(make_topology):
    topo = make_topology(num_clients=60, overlap_sizes=(10, 10))
    params = ChannelParams()
    ctx = _context(
        topo, _shift_trainer(np.zeros(60)), kappa=3,
        gains=sample_gains(topo, params, 1), compute_times=sample_compute_times(60, params, 1),
    )
    state = initial_state(topo, scalar(0.0), ctx.sample_counts)
    for name in ("fedoc_fastest", "fedoc_fixed", "hfl", "fedmes", "fleocd"):
        current = state
        for r in range(7):
            before = current.ready_times
            current, trace = ROUND_ENGINES[name](current, ctx, r)
            assert all(after > b for after, b in zip(current.ready_times, before)), name
            if trace.cloud:
                assert all(t.t_relay == 0.0 for t in trace.timings)
                assert len(set(current.ready_times)) == 1


def test_cloud_round_is_the_global_weighted_mean(make_topology):
    topo = make_topology()
    n = np.arange(1, 13, dtype=float)
    offsets = np.random.default_rng(3).normal(size=12)
    trained = {}
    ctx = _context(topo, _shift_trainer(offsets), n=n, kappa=1)
    ctx.observer = lambda r, models: trained.update(models)
    state = initial_state(topo, [scalar(0.1), scalar(0.2), scalar(0.3)], n)
    new_state, trace = run_round_fedoc(state, ctx, 0)
    assert trace.cloud
    expected = sum(n[k] * trained[k][0] for k in range(12)) / n.sum()
    for model in new_state.models:
        assert model[0] == pytest.approx(expected, rel=1e-12)


def test_kappa_one_hfl_synchronizes_every_round(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.arange(12.0)), kappa=1)
    state = initial_state(topo, scalar(0.0), ctx.sample_counts)
    for r in range(3):
        state, trace = run_round_hfl(state, ctx, r)
        assert len(set(trace.checksums)) == 1


def test_hfl_without_cloud_keeps_cells_apart(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.arange(12.0)), kappa=100)
    state = initial_state(topo, scalar(0.0), ctx.sample_counts)
    for r in range(3):
        state, trace = run_round_hfl(state, ctx, r)
    assert len(set(trace.checksums)) == 3
    assert all(t.t_relay == 0.0 for t in trace.timings)


def test_fedmes_overlap_client_starts_from_average_and_waits(make_topology):
    topo = make_topology()
    seen = {}

    def trainer(k, model, r):
        seen[k] = model
        return model

    n = np.ones(12)
    ctx = _context(topo, trainer, n=n, compute_times=np.ones(12), epochs=1)
    state = initial_state(topo, [scalar(0.0), scalar(1.0), scalar(2.0)], n)
    state = state.__class__(state.models, (0.0, 5.0, 0.0), state.es_weights)
    new_state, trace = run_round_fedmes(state, ctx, 0)
    k = topo.overlap_clients[0][0]
    w0, w1 = state.es_weights[0], state.es_weights[1]
    assert seen[k][0] == pytest.approx((w0 * 0.0 + w1 * 1.0) / (w0 + w1))
    # gains are off, so the clock is arrival + training only
    assert new_state.ready_times[0] == 6.0
    assert trace.cell_weights[0] == len(topo.coverage(0))


def test_fleocd_first_round_matches_fedmes(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.random.default_rng(0).normal(size=12)), n=np.arange(1, 13.0))
    state = initial_state(topo, [scalar(0.0), scalar(1.0), scalar(2.0)], ctx.sample_counts)
    fedmes_state, fedmes_trace = run_round_fedmes(state, ctx, 0)
    fleocd_state, fleocd_trace = run_round_fleocd(state, ctx, 0)
    assert fedmes_trace.checksums == fleocd_trace.checksums
    assert set(fleocd_state.caches) == set(topo.overlap_clients[0] + topo.overlap_clients[1])
    _, fedmes_next = run_round_fedmes(fedmes_state, ctx, 1)
    _, fleocd_next = run_round_fleocd(fleocd_state, ctx, 1)
    assert fedmes_next.checksums != fleocd_next.checksums


def test_fedavg_needs_one_server(make_topology):
    topo = make_topology()
    ctx = _context(topo, _shift_trainer(np.zeros(12)))
    with pytest.raises(ValueError):
        run_round_fedavg(initial_state(topo, scalar(0.0), ctx.sample_counts), ctx, 0)


def test_single_server_fedoc_is_fedavg(make_config):
    overrides = dict(
        topology={"num_servers": 1, "num_clients": 6, "overlap_sizes": []},
        training={"rounds": 4},
    )
    fedoc = run_experiment(make_config(algorithm="fedoc_fastest", **overrides), write=False)
    fedavg = run_experiment(make_config(algorithm="fedavg", **overrides), write=False)
    np.testing.assert_array_equal(fedoc.final_models[0].vector, fedavg.final_models[0].vector)
    assert [t.checksums for t in fedoc.traces] == [t.checksums for t in fedavg.traces]
    for a, b in zip(fedoc.traces, fedavg.traces):
        assert a.simulated_time == pytest.approx(b.simulated_time, rel=1e-12)


def test_fedoc_without_overlap_is_hfl(make_config):
    overrides = dict(topology={"overlap_sizes": [0, 0]}, training={"rounds": 20}, kappa="5")
    fedoc = run_experiment(make_config(algorithm="fedoc_fastest", **overrides), write=False)
    hfl = run_experiment(make_config(algorithm="hfl", **overrides), write=False)
    assert [t.checksums for t in fedoc.traces] == [t.checksums for t in hfl.traces]


@pytest.mark.parametrize("num_servers", [1, 2, 3, 4])
def test_markers_reach_the_edge_after_chain_length_rounds(num_servers):
    spec = TopologySpec(
        num_servers=num_servers,
        num_clients=2 * num_servers + 2 * (num_servers - 1),
        overlap_sizes=[2] * (num_servers - 1),
        balance=False,
    )
    topo = build_topology(spec, rng_seed=0)
    history = marker_propagation_check(topo, rounds=num_servers + 1)
    assert completion_round(history, server=0) == num_servers - 1
    assert completion_round(history, server=num_servers - 1) == num_servers - 1


def test_marker_sets_on_three_servers(make_topology):
    history = marker_propagation_check(make_topology(), rounds=3)
    assert history[0] == [frozenset({0}), frozenset({1}), frozenset({2})]
    assert history[1][0] == frozenset({0, 1})
    assert history[1][1] == frozenset({0, 1, 2})
    assert history[2][0] == frozenset({0, 1, 2})


def test_relay_clients_attach_by_chain_half(make_topology):
    topo = make_topology(num_servers=4, num_clients=20, overlap_sizes=(2, 2, 2))
    homes = default_home_cells(topo)
    for p in range(3):
        roc = topo.relay_client(p)
        assert topo.role(roc).kind == ROC
        assert homes[roc] == relay_attachment(p, 4)
