"""Scenario construction and the semantics-coupled dataset generator."""

import numpy as np
import pytest

import reference
from semsense.bounds import tv_distance
from semsense.errors import InvalidScenario
from semsense.scenario import (
    CLASS_BLOCK_START,
    Scenario,
    generate_datasets,
    make_scenario,
    semantic_distance,
)

from conftest import quick_dataset_config, quick_scenario_config


def test_scenario_layout():
    cfg = quick_scenario_config()
    scen = make_scenario(cfg)
    assert len(scen.receivers) == cfg.num_receivers
    labeled = scen.labeled_receivers()
    unlabeled = scen.unlabeled_receivers()
    assert [r.id for r in labeled] == [f"rx{i}" for i in range(cfg.num_labeled)]
    assert len(unlabeled) == cfg.num_receivers - cfg.num_labeled
    assert [r.cluster for r in scen.receivers] == [
        i % cfg.num_clusters for i in range(cfg.num_receivers)
    ]
    assert scen.receiver("rx3").id == "rx3"
    with pytest.raises(InvalidScenario):
        scen.receiver("rx99")


def test_same_cluster_semantics_are_closer():
    scen = make_scenario(quick_scenario_config())
    by_cluster = {0: [], 1: []}
    for r in scen.receivers:
        by_cluster[r.cluster].append(r.semantics)
    within = semantic_distance(by_cluster[0][0], by_cluster[0][1])
    across = semantic_distance(by_cluster[0][0], by_cluster[1][0])
    assert within < across


def test_twin_copies_semantics_and_data_stream():
    cfg = quick_scenario_config(twin_unlabeled_of="rx0")
    scen = generate_datasets(make_scenario(cfg),
                             dataset_cfg=quick_dataset_config())
    twin = scen.unlabeled_receivers()[-1]
    src = scen.receiver("rx0")
    assert twin.data_twin_of == "rx0"
    assert semantic_distance(twin.semantics, src.semantics) == 0.0
    assert twin.cluster == src.cluster
    # The twin's hidden dataset is the source's dataset draw, exactly.
    assert np.array_equal(twin.oracle_dataset.X_train, src.dataset.X_train)
    assert np.array_equal(twin.oracle_dataset.y_train, src.dataset.y_train)


def test_dataset_attachment_rules(two_cluster_scenario):
    for r in two_cluster_scenario.receivers:
        if r.labeled:
            assert r.dataset is not None and r.oracle_dataset is None
        else:
            assert r.dataset is None and r.oracle_dataset is not None
        ds = r.dataset or r.oracle_dataset
        assert len(ds.X_train) == 4 * 20
        assert len(ds.X_test) == 4 * 15
        assert set(np.unique(ds.y_train)) == set(range(4))
        assert r.distribution is not None


def test_exposed_distribution_matches_independent_derivation(
        two_cluster_scenario):
    cfg = two_cluster_scenario.config
    dc = quick_dataset_config()
    n_axes = dc.num_classes + cfg.num_clusters - 1
    for r in two_cluster_scenario.receivers:
        want = reference.exact_cell_distribution(
            dc.num_classes, 3.0, dc.feature_noise, n_axes, r.cluster
        )
        assert np.allclose(r.distribution.probs, want, atol=1e-12)
        assert abs(r.distribution.probs.sum() - 1.0) < 1e-9


def test_tv_structure_across_clusters(two_cluster_scenario):
    recs = two_cluster_scenario.receivers
    same = [
        (a, b)
        for i, a in enumerate(recs)
        for b in recs[i + 1:]
        if a.cluster == b.cluster
    ]
    cross = [
        (a, b)
        for i, a in enumerate(recs)
        for b in recs[i + 1:]
        if a.cluster != b.cluster
    ]
    for a, b in same:
        assert tv_distance(a.distribution, b.distribution) == 0.0
    for a, b in cross:
        d = tv_distance(a.distribution, b.distribution)
        assert d > 0.01
        assert d == pytest.approx(
            reference.tv_sup(a.distribution.probs, b.distribution.probs),
            abs=1e-15,
        )


def test_signature_axes_shift_with_cluster(two_cluster_scenario):
    # Class y in cluster c lights signature axis y + c, so cluster 1's
    # class means sit one axis later than cluster 0's.
    r0 = next(r for r in two_cluster_scenario.receivers if r.cluster == 0)
    r1 = next(r for r in two_cluster_scenario.receivers if r.cluster == 1)
    for r, shift in ((r0, 0), (r1, 1)):
        ds = r.dataset or r.oracle_dataset
        for y in range(4):
            rows = ds.X_train[ds.y_train == y]
            lifted = rows[:, CLASS_BLOCK_START + y + shift].mean()
            assert lifted > 2.0  # class separation 3 against noise 0.25


def test_dataset_generation_is_deterministic():
    cfg = quick_scenario_config()
    one = generate_datasets(make_scenario(cfg),
                            dataset_cfg=quick_dataset_config())
    two = generate_datasets(make_scenario(cfg),
                            dataset_cfg=quick_dataset_config())
    for a, b in zip(one.receivers, two.receivers):
        da, db = a.dataset or a.oracle_dataset, b.dataset or b.oracle_dataset
        assert np.array_equal(da.X_train, db.X_train)
        assert np.array_equal(da.y_test, db.y_test)


def test_scenario_validation():
    with pytest.raises(InvalidScenario):
        make_scenario(quick_scenario_config(num_labeled=0))
    with pytest.raises(InvalidScenario):
        make_scenario(quick_scenario_config(num_labeled=9, num_receivers=6))
    with pytest.raises(InvalidScenario):
        make_scenario(quick_scenario_config(num_clusters=0))
    with pytest.raises(InvalidScenario):
        make_scenario(quick_scenario_config(phase_error_model="sparkle"))
    with pytest.raises(InvalidScenario):
        make_scenario(quick_scenario_config(twin_unlabeled_of="rx42"))


def test_signature_capacity_guard():
    scen = make_scenario(quick_scenario_config())
    with pytest.raises(InvalidScenario):
        generate_datasets(scen, dataset_cfg=quick_dataset_config(
            num_classes=12
        ))
    with pytest.raises(InvalidScenario):
        generate_datasets(scen, dataset_cfg=quick_dataset_config(
            num_classes=1
        ))
    with pytest.raises(InvalidScenario):
        generate_datasets(scen, dataset_cfg=quick_dataset_config(
            samples_per_class=0
        ))


def test_duplicate_ids_rejected():
    scen = make_scenario(quick_scenario_config())
    with pytest.raises(InvalidScenario):
        Scenario(
            receivers=scen.receivers + [scen.receivers[0]],
            seed=0,
            noise_std=0.1,
            phase_error_model="none",
            grid=scen.grid,
        )
