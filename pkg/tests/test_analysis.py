import numpy as np
import pytest
import toml

from src.config.experiment import config_from_dict
from src.core.analysis import (
    PopulationGradients,
    centralized_sgd,
    inter_cell_weights,
    measure_divergence,
    population_steps,
    propagate_weights,
    regroup_matrix,
    run_bound_check,
    run_cell_centralized,
    run_fedoc_population,
    step_factors,
)
from src.core.datagen import make_synthetic, partition_noniid, stratified_split
from src.core.errors import AnalysisError
from src.core.learner import build_model_spec, init_model, loss_and_grad, ModelParams
from tests.conftest import CONFIG_DIR, merge

IID_PARTITION = {"partition": {"classes_per_client": 3, "classes_per_cell": 3, "samples_per_client": 18}}


@pytest.fixture
def bound_config_dict():
    return toml.load(CONFIG_DIR / "bound_check.toml")


@pytest.fixture
def population(make_topology):
    ds, _ = stratified_split(make_synthetic(3, 4, 100, 0.8, seed=2), 0.2, seed=2)
    topo = make_topology()
    plan = partition_noniid(ds, topo, 1, 2, seed=5)
    spec = build_model_spec("logistic", 4, 3)
    pop = PopulationGradients.from_plan(spec, ds, plan)
    return topo, plan, pop, init_model(spec, 1).vector


def test_rho_and_mu_for_equal_cells():
    rho, mu = inter_cell_weights([1.0, 1.0, 1.0])
    np.testing.assert_allclose(rho, [1 / 6, 1 / 6, -1 / 3], atol=1e-15)
    np.testing.assert_allclose(mu, [-1 / 3, 1 / 6, 1 / 6], atol=1e-15)


def test_regroup_rows_are_stochastic():
    matrix = regroup_matrix([3.0, 5.0, 2.0])
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-15)
    assert matrix[0, 2] == 0.0 and matrix[2, 0] == 0.0


def test_propagated_weights_keep_zero_sum():
    rng = np.random.default_rng(0)
    for _ in range(100):
        sizes = rng.uniform(1, 100, size=3)
        matrix = regroup_matrix(sizes)
        for seed_weights in inter_cell_weights(sizes):
            for w in propagate_weights(seed_weights, matrix, 20):
                assert abs(w.sum()) < 1e-14


def test_zero_sum_check_rejects_drift():
    with pytest.raises(AnalysisError):
        propagate_weights(np.array([1e-13, 0.0, 0.0]), np.eye(3), 1)


def test_step_factors_vanish_with_the_step_size():
    factors = step_factors(0.0, np.array([0.5, 0.5, 0.0]), np.array([3.0, 4.0, 9.0]), 4)
    np.testing.assert_array_equal(factors, np.ones(4))
    factors = step_factors(0.1, np.array([0.5, 0.5, 0.0]), np.array([3.0, 4.0, 9.0]), 2)
    np.testing.assert_allclose(factors, [1.35, 1.35])


def test_cell_oracle_matches_reference_loop(population, make_config):
    topo, plan, pop, init = population
    cfg = make_config(training={"epochs": 2, "rounds": 4})
    oracle = run_cell_centralized(topo, plan, cfg, pop, init, first_round=1, last_round=3)

    spec = pop.spec
    classes = [(pop.features[pop.labels == i], pop.labels[pop.labels == i]) for i in range(3)]
    sizes = plan.cell_sizes.astype(float)
    w = init.copy()
    for r in range(1, 4):
        eta = 1.0 / (r * 1)
        cell_models = []
        for j in range(3):
            v = w.copy()
            grad = np.zeros_like(v)
            for i, (X, y) in enumerate(classes):
                weight = plan.cell_histograms[j][i]
                if weight > 0:
                    grad += weight * loss_and_grad(ModelParams(spec, v), X, y)[1]
            cell_models.append(v - eta * grad)
        w = sum(sizes[j] * cell_models[j] for j in range(3)) / sizes.sum()
        np.testing.assert_allclose(oracle.cloud_models[r], w, atol=1e-12)


def test_single_cell_oracle_is_gradient_descent(population):
    _, plan, pop, init = population
    hist = plan.global_histogram
    run = centralized_sgd(pop, [hist], [1.0], init, range(1, 3), epochs=3)
    w = population_steps(pop, init, hist, 1.0 / 2, 2)[-1]
    w = population_steps(pop, w, hist, 1.0 / 4, 2)[-1]
    np.testing.assert_allclose(run.cloud_models[2], w, atol=1e-14)


def test_one_client_per_cell_every_round_has_no_divergence(make_topology):
    ds, _ = stratified_split(make_synthetic(3, 4, 60, 0.8, seed=4), 0.2, seed=4)
    topo = make_topology(num_clients=3, overlap_sizes=(0, 0))
    plan = partition_noniid(ds, topo, 2, 2, seed=1)
    spec = build_model_spec("logistic", 4, 3)
    pop = PopulationGradients.from_plan(spec, ds, plan)
    init = init_model(spec, 0).vector
    fedoc = run_fedoc_population(topo, plan, pop, init, rounds=3, kappa=1, epochs=3)
    cfg = config_from_dict({"training": {"epochs": 3, "rounds": 4}})
    oracle = run_cell_centralized(topo, plan, cfg, pop, init, first_round=1, last_round=3)
    assert measure_divergence(fedoc, oracle, 3) == 0.0


def test_divergence_needs_cloud_rounds(population):
    topo, plan, pop, init = population
    fedoc = run_fedoc_population(topo, plan, pop, init, rounds=3, kappa=5, epochs=2)
    oracle = centralized_sgd(pop, list(plan.cell_histograms), plan.cell_sizes, init, range(1, 4), epochs=2)
    with pytest.raises(AnalysisError):
        measure_divergence(fedoc, oracle, 3)


def test_bound_holds_on_shipped_config(bound_config_dict, tmp_path):
    report = run_bound_check(config_from_dict(bound_config_dict), out_dir=tmp_path)
    assert report.divergence <= report.bound.rhs
    assert report.bound.eps_intra_closed >= report.bound.eps_intra
    assert report.bound.eps_inter_closed >= report.bound.eps_inter
    assert report.passed
    written = (tmp_path / "bound_report.json").read_text()
    assert '"pass": true' in written
    assert report.convergence["rhs"] > 0


def test_iid_cells_have_no_intra_term(bound_config_dict):
    report = run_bound_check(config_from_dict(merge(bound_config_dict, IID_PARTITION)))
    assert report.bound.eps_intra == 0.0
    assert report.bound.eps_intra_closed == 0.0
    assert max(report.heterogeneity["client"]) == 0.0


def test_coinciding_edge_models_have_no_inter_term(bound_config_dict, make_topology):
    ds, _ = stratified_split(make_synthetic(3, 4, 100, 0.8, seed=2), 0.2, seed=2)
    topo = make_topology()
    plan = partition_noniid(ds, topo, 3, 3, seed=5, samples_per_client=18)
    spec = build_model_spec("logistic", 4, 3)
    pop = PopulationGradients.from_plan(spec, ds, plan)
    fedoc = run_fedoc_population(topo, plan, pop, init_model(spec, 0).vector, rounds=4, kappa=100, epochs=3)
    for models in fedoc.es_models.values():
        assert all(np.array_equal(models[0], w) for w in models[1:])

    report = run_bound_check(config_from_dict(merge(bound_config_dict, IID_PARTITION)))
    assert report.bound.eps_inter == pytest.approx(0.0, abs=1e-12)
    assert report.divergence == pytest.approx(0.0, abs=1e-12)
    assert report.bound.rhs >= 0.0


def test_iid_partition_diverges_no_more_than_noniid(bound_config_dict):
    noniid = run_bound_check(config_from_dict(merge(bound_config_dict, {"partition": {"samples_per_client": 18}})))
    iid = run_bound_check(config_from_dict(merge(bound_config_dict, IID_PARTITION)))
    assert iid.divergence <= noniid.divergence
    assert noniid.divergence > 0.0


@pytest.mark.parametrize("overrides", [
    {"topology": {"num_servers": 4, "num_clients": 16, "overlap_sizes": [2, 2, 2]}},
    {"training": {"schedule": "exponential"}},
    {"algorithm": "fedoc_fastest"},
    {"training": {"rounds": 12}},
    {"kappa": "inf"},
], ids=["four-servers", "schedule", "fastest", "kappa-not-dividing", "cloud-free"])
def test_preconditions(bound_config_dict, overrides):
    cfg = config_from_dict(merge(bound_config_dict, overrides))
    with pytest.raises(AnalysisError):
        run_bound_check(cfg)
