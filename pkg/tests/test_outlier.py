import io
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import haversine_km, mean_distance_flags

from arete.errors import DegenerateClassesError, DimensionMismatchError, InsufficientPointsError, MissingGridError
from arete.geo import EnvFeatureGrid, normalize_features
from arete.outlier import (
    OutlierConfig,
    detect_outliers,
    detect_outliers_env,
    detect_outliers_geo,
    detect_outliers_svm,
    fit_svm,
    sample_pseudo_absences,
    train_svm,
    write_outlier_report,
)
from arete.records import Coordinate as C
from arete.records import OccurrenceRecord

FINLAND = [C(60.17 + 0.1 * i, 24.94 + 0.1 * (i % 3)) for i in range(9)]
FAR = C(-33.9, 18.4)


def test_far_point_is_flagged():
    res = detect_outliers_geo(FINLAND + [FAR])
    assert res.flags == [False] * 9 + [True]
    assert res.stats[-1] > 9000


def test_stats_match_extended_precision_means():
    pts = FINLAND + [FAR]
    res = detect_outliers_geo(pts)
    for i, p in enumerate(pts):
        ref = sum(haversine_km(p.latitude, p.longitude, q.latitude, q.longitude) for q in pts) / (len(pts) - 1)
        assert res.stats[i] == pytest.approx(ref, rel=1e-6)


def test_too_few_points_gives_notice():
    res = detect_outliers_geo([C(0, 0), C(40, 40)])
    assert res.flags == [False, False]
    assert res.threshold is None and "2 points" in res.notice


def test_identical_points_never_flagged():
    res = detect_outliers_geo([C(1, 1)] * 8)
    assert res.stats == [0.0] * 8 and not any(res.flags)


def test_quantile_one_flags_nothing():
    assert not any(detect_outliers_geo(FINLAND + [FAR], OutlierConfig(quantile=1.0)).flags)


def test_small_sample_flags_only_the_maximum():
    # with at most 20 points the 0.95 quantile lies between the two largest values
    rng = random.Random(8)
    for n in range(5, 21):
        pts = [C(rng.uniform(-50, 50), rng.uniform(-50, 50)) for _ in range(n)]
        res = detect_outliers_geo(pts)
        stats = res.stats
        if len(set(stats)) == n:
            assert res.flags == [s == max(stats) for s in stats]


point_lists = st.lists(st.builds(C, st.floats(-60, 60), st.floats(-120, 120)), min_size=5, max_size=40)


@settings(max_examples=60, deadline=None)
@given(point_lists, st.floats(0.5, 1.0), st.randoms())
def test_quantile_rule_properties(pts, q, rnd):
    res = detect_outliers_geo(pts, OutlierConfig(quantile=q))
    assert res.flags == mean_distance_flags(res.stats, q)
    # a higher quantile flags a subset
    higher = detect_outliers_geo(pts, OutlierConfig(quantile=min(1.0, q + 0.1)))
    assert all(f or not h for f, h in zip(res.flags, higher.flags))
    order = list(range(len(pts)))
    rnd.shuffle(order)
    shuffled = detect_outliers_geo([pts[i] for i in order], OutlierConfig(quantile=q))
    assert [shuffled.flags[order.index(i)] for i in range(len(pts))] == res.flags


def test_config_validation():
    for bad in (dict(quantile=0), dict(quantile=1.5), dict(methods=()), dict(methods=("knn",)), dict(svm_c=0)):
        with pytest.raises(ValueError):
            OutlierConfig(**bad)


def feature_grid(size=20):
    """Two features that grow with row and column: each cell is its own position."""
    cells = {(r, c): (float(r), float(c)) for r in range(size) for c in range(size)}
    return normalize_features(EnvFeatureGrid(1.0, (0.0, 0.0), 2, cells))


def cell_point(r, c):
    return C(r + 0.5, c + 0.5)


CORNER = [cell_point(r, c) for r in range(4) for c in range(4) if (r + c) % 2 == 0]  # 8 points
BLOCK = [cell_point(r, c) for r in range(4) for c in range(4)]  # 16 points
EXTREME = cell_point(19, 19)
SVM_CFG = OutlierConfig(svm_c=1.0, svm_gamma=5.0)


def test_env_flags_extreme_corner():
    res = detect_outliers_env(CORNER + [EXTREME], feature_grid())
    assert res.flags == [False] * len(CORNER) + [True]


def test_env_point_outside_grid_not_assessed():
    res = detect_outliers_env(CORNER + [C(-40, -40)], feature_grid())
    assert res.stats[-1] is None and res.flags[-1] is None
    assert all(s is not None for s in res.stats[:-1])


def two_blobs(seed=0, n=60):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.25, 0.06, size=(n, 2))
    b = rng.normal(0.75, 0.06, size=(n, 2))
    return np.vstack([a, b]), np.concatenate([np.ones(n), -np.ones(n)])


def test_svm_separates_blobs():
    x, y = two_blobs()
    model = fit_svm(x, y, c=10.0, gamma=2.0)
    assert (model.predict(x) == y).mean() >= 0.95
    xt, yt = two_blobs(seed=1)
    assert (model.predict(xt) == yt).mean() >= 0.95


def test_svm_dual_constraints_hold():
    x, y = two_blobs(seed=3)
    model = fit_svm(x, y, c=0.5, gamma=2.0)
    assert np.all(np.abs(model.alphas) <= 0.5 + 1e-9)
    assert abs(model.alphas.sum()) < 1e-6  # sum_i alpha_i y_i == 0


def test_svm_is_deterministic():
    x, y = two_blobs(seed=4)
    a, b = fit_svm(x, y, gamma=2.0), fit_svm(x, y, gamma=2.0)
    assert np.array_equal(a.alphas, b.alphas) and a.bias == b.bias
    assert np.array_equal(a.decision_function(x), b.decision_function(x))


def test_svm_agrees_with_reference_solver():
    svm = pytest.importorskip("sklearn.svm")
    x, y = two_blobs(seed=5)
    ours = fit_svm(x, y, c=1.0, gamma=2.0, tol=1e-6)
    ref = svm.SVC(C=1.0, gamma=2.0, kernel="rbf", tol=1e-6).fit(x, y)
    grid = np.random.default_rng(0).uniform(0, 1, size=(200, 2))
    assert np.allclose(ours.decision_function(grid), ref.decision_function(grid), atol=1e-3)


def test_train_svm_label_checks():
    with pytest.raises(DegenerateClassesError):
        train_svm([[0.1, 0.1], [0.2, 0.2]], [])
    with pytest.raises(DegenerateClassesError):
        train_svm([[0.1, 0.1]], [[0.9, 0.9], [0.8, 0.8]])
    with pytest.raises(DimensionMismatchError):
        train_svm([[0.1, 0.1], [0.2, 0.2]], [[0.9], [0.8]])


def test_svm_envelope_on_corner_cluster():
    grid = feature_grid()
    res = detect_outliers_svm(BLOCK + [EXTREME], grid, SVM_CFG)
    assert sum(1 for f in res.flags[:-1] if not f) >= 0.9 * len(BLOCK)
    assert res.flags[-1] is True


def test_svm_needs_enough_presences():
    with pytest.raises(InsufficientPointsError):
        detect_outliers_svm(CORNER[:3], feature_grid())


def test_pseudo_absences_avoid_presences_and_are_seeded():
    grid = feature_grid(5)
    pres = [cell_point(0, 0), cell_point(1, 1)]
    a = sample_pseudo_absences(grid, pres, 30, seed=9)
    assert a == sample_pseudo_absences(grid, pres[::-1], 30, seed=9)
    assert len(a) == 30
    assert grid.cells[(0, 0)] not in a and grid.cells[(1, 1)] not in a


def records_for(points, species="Aa bb"):
    return [OccurrenceRecord(species, f"loc{i}", p, "doc", 0) for i, p in enumerate(points)]


def test_pipeline_groups_species_and_leaves_records_alone():
    recs = records_for(FINLAND + [FAR]) + records_for([C(0, 0), C(1, 1)], "Cc dd")
    recs.append(OccurrenceRecord("Aa bb", "unknown place"))
    before = list(recs)
    report = detect_outliers(recs, cfg=OutlierConfig(methods=("geo",)))
    assert recs == before
    assert [r.record for r in report.flagged("geo")] == [recs[9]]
    assert report.rows[-1].geo_flag is None and not report.rows[-1].assessed
    assert any(n.startswith("Cc dd geo") for n in report.notices)


def test_grid_methods_need_a_grid():
    with pytest.raises(MissingGridError):
        detect_outliers(records_for(FINLAND), cfg=OutlierConfig(methods=("geo", "env")))


def test_all_methods_together():
    recs = records_for(BLOCK + [EXTREME])
    report = detect_outliers(recs, feature_grid(), SVM_CFG)
    assert report.rows[-1].geo_flag and report.rows[-1].env_flag and report.rows[-1].svm_flag


def test_report_csv():
    recs = records_for(FINLAND + [FAR]) + [OccurrenceRecord("Aa bb", "somewhere")]
    out = io.StringIO()
    write_outlier_report(detect_outliers(recs, cfg=OutlierConfig(methods=("geo",))), out)
    lines = out.getvalue().splitlines()
    assert lines[0] == "species,latitude,longitude,geo_stat,geo_flag,env_stat,env_flag,svm_flag,assessed"
    assert lines[10].startswith("Aa bb,-33.9,18.4,") and ",true,,,,true" in lines[10]
    assert lines[11] == "Aa bb,,,,,,,,false"
