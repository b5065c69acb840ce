import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import all_pairs_edit_distances, edit_distance_bfs, edit_distance_recursive

from arete.errors import EmptyReferenceError, NoCoordinateDataError, ReportIoError, ScoreOutOfRangeError
from arete.geo import EARTH_RADIUS_KM, great_circle_km
from arete.records import Coordinate as C
from arete.records import OccurrenceRecord as R
from arete.validation import (
    ConfusionCounts,
    ScoredRow,
    confusion_metrics,
    distance_weighted_metrics,
    f1_score,
    format_metric,
    levenshtein,
    match_records,
    mean_min_levenshtein,
    pair_weights,
    performance_report,
    read_scored_rows,
    score_obs,
    score_pred,
    similarity,
    weighted_counts,
    weighted_f1,
)


def test_levenshtein_examples():
    assert levenshtein("abc", "abc") == 0
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "sitting") == 3 == edit_distance_recursive("kitten", "sitting")
    assert levenshtein("Lisboa", "lisboa") == 1


def test_levenshtein_exhaustive_short_strings():
    words, dist = all_pairs_edit_distances("abc", 5)
    assert len(words) == 364
    for a in words:
        for b in words:
            assert levenshtein(a, b) == dist[(a, b)]


def test_levenshtein_axioms_on_random_pairs():
    rng = random.Random(42)

    def word():
        return "".join(rng.choice("abcdé") for _ in range(rng.randint(0, 8)))

    for _ in range(10_000):
        a, b, c = word(), word(), word()
        d = levenshtein(a, b)
        assert d >= 0 and (d == 0) == (a == b)
        assert d == levenshtein(b, a)
        assert levenshtein(a, c) <= d + levenshtein(b, c)


@pytest.mark.parametrize("a, b", [("Lisboa", "Lisbon"), ("Porto", "Lisboa"), ("Faro", "Évora"), ("sol", "")])
def test_levenshtein_against_oracles(a, b):
    assert levenshtein(a, b) == edit_distance_recursive(a, b)
    if levenshtein(a, b) <= 3:
        assert levenshtein(a, b) == edit_distance_bfs(a, b)


def test_mean_min():
    assert mean_min_levenshtein(["Porto", "Lisboa"], ["Lisboa", "Porto"]) == 0
    assert mean_min_levenshtein(["Lisboa"], ["Lisbon", "Helsinki"]) == 1
    d = edit_distance_recursive("porto", "lisboa")
    assert mean_min_levenshtein(["Porto", "Lisboa"], ["Lisboa"]) == d / 2
    assert mean_min_levenshtein(["Évora"], []) == 5
    with pytest.raises(EmptyReferenceError):
        mean_min_levenshtein([], ["x"])


def test_similarity_folds_case_and_accents():
    assert similarity("Cidade Universitária", "cidade universitaria") == 1.0
    assert similarity("", "x") == 0.0


def test_metric_anchor_counts():
    m = confusion_metrics(ConfusionCounts(110, 10, 34))
    assert (round(m.accuracy, 3), round(m.recall, 3), round(m.precision, 3), round(m.f1, 3)) == (0.714, 0.764, 0.917, 0.833)
    m = confusion_metrics(ConfusionCounts(35, 1, 2))
    assert m.accuracy == pytest.approx(0.921, abs=1e-3)
    assert m.f1 == pytest.approx(0.958, abs=1e-3)
    assert f1_score(0.840, 0.607) == pytest.approx(0.704, abs=1e-3)


def test_undefined_metrics():
    m = confusion_metrics(ConfusionCounts(0, 0, 5))
    assert m.precision is None and m.recall == 0 and m.f1 is None
    assert format_metric(m.precision) == "n/a"
    assert confusion_metrics(ConfusionCounts(0, 0, 0)).accuracy is None
    for bad in ((-1, 0, 0), (math.inf, 0, 0), (0, math.nan, 0)):
        with pytest.raises(ValueError):
            ConfusionCounts(*bad)


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(0, 1e6))
def test_f1_lies_between_precision_and_recall(tp, fp, fn):
    m = confusion_metrics(ConfusionCounts(tp, fp, fn))
    if m.f1 is not None:
        lo, hi = min(m.precision, m.recall), max(m.precision, m.recall)
        assert lo - 1e-12 <= m.f1 <= hi + 1e-12


def test_worked_example_rows():
    assert (score_obs(ScoredRow(0, 0)).classification, score_obs(ScoredRow(0, 0)).weight) == ("FN", 1)
    assert score_obs(ScoredRow(0.5, 1)) == score_obs(ScoredRow(0.5, 1.0))
    assert (score_obs(ScoredRow(0.5, 1)).classification, score_obs(ScoredRow(0.5, 1)).weight) == ("TP", 0.75)
    fp = score_pred(ScoredRow(0, 0, "pred"))
    tp = score_pred(ScoredRow(1, 1, "pred", claimed=True))
    assert (fp.classification, fp.weight) == ("FP", 1)
    assert (tp.classification, tp.weight) == ("TP", 0)


def test_score_range_checked():
    for x, y in ((0.3, 1), (0.5, 0.5), (2, 0)):
        with pytest.raises(ScoreOutOfRangeError):
            ScoredRow(x, y)


def test_weighted_f1_binary_degeneration():
    rng = random.Random(0)
    for _ in range(50):
        obs = [ScoredRow(*rng.choice([(0, 0), (1, 1)])) for _ in range(rng.randint(1, 20))]
        pred_claimed = [ScoredRow(1, 1, "pred", True) for r in obs if r.loc_score == 1]
        pred_spurious = [ScoredRow(0, 0, "pred") for _ in range(rng.randint(0, 5))]
        counts, metrics = weighted_f1(obs, pred_claimed + pred_spurious)
        tp = sum(1 for r in obs if r.loc_score == 1)
        plain = ConfusionCounts(tp, len(pred_spurious), len(obs) - tp)
        assert counts == plain
        assert metrics == confusion_metrics(plain)


@given(st.lists(st.tuples(st.sampled_from([0, 0.25, 0.5, 0.75, 1]), st.sampled_from([0, 1])), min_size=1))
def test_obs_side_conservation(scores):
    results = [score_obs(ScoredRow(x, y)) for x, y in scores]
    assert sum(r.classification == "FN" for r in results) + sum(r.classification == "TP" for r in results) == len(scores)
    assert all(0 <= r.weight <= 1 for r in results)


def test_read_scored_rows(tmp_path):
    p = tmp_path / "pred.csv"
    p.write_text("locality,loc_score,coord_score,claimed\nHelsinki,0,0,\nAlgarve,1,1,true\n")
    rows = read_scored_rows(p, "pred")
    assert [score_pred(r).classification for r in rows] == ["FP", "TP"]


def rec(species, locality, lat=None, lon=None):
    return R(species, locality, None if lat is None else C(lat, lon), "ref", 0)


OBS = [
    rec("Aa bb", "Lisboa", 38.72, -9.14),
    rec("Aa bb", "Porto", 41.15, -8.61),
    rec("Aa bb", "Faro", 37.02, -7.93),
    rec("Cc dd", "Helsinki", 60.17, 24.94),
]


def test_identity_matching():
    ms = match_records(OBS, OBS)
    assert [(p.pred_index, p.obs_index) for p in ms.pairs] == [(i, i) for i in range(4)]
    assert ms.unmatched_pred == [] and ms.unmatched_obs == []
    assert distance_weighted_metrics(ms) == confusion_metrics(ms.counts())


def test_extra_species_is_one_false_positive():
    ms = match_records(OBS + [rec("Zz yy", "Lisboa", 38.72, -9.14)], OBS)
    assert ms.counts() == ConfusionCounts(4, 1, 0)


def test_far_coordinates_do_not_match():
    ms = match_records([rec("Aa bb", "Somewhere", 43.72, -9.14)], [OBS[0]])
    assert ms.counts() == ConfusionCounts(0, 1, 1)


def test_locality_similarity_admits_pair():
    ms = match_records([rec("Aa bb", "lisbõa")], [OBS[0]])
    assert ms.counts() == ConfusionCounts(1, 0, 0)
    assert ms.pairs[0].coord_error_km is None


def test_every_index_used_exactly_once():
    rng = random.Random(3)
    names = ["Lisboa", "Porto", "Faro", "Braga"]
    for _ in range(50):
        obs = [rec("Aa bb", rng.choice(names), rng.uniform(37, 42), rng.uniform(-9, -7)) for _ in range(rng.randint(0, 8))]
        pred = [rec("Aa bb", rng.choice(names)) for _ in range(rng.randint(0, 8))]
        ms = match_records(pred, obs)
        assert sorted([p.pred_index for p in ms.pairs] + ms.unmatched_pred) == list(range(len(pred)))
        assert sorted([p.obs_index for p in ms.pairs] + ms.unmatched_obs) == list(range(len(obs)))


def test_distance_weight_half_at_mean_spread():
    obs = OBS[:3]
    spread = (great_circle_km(obs[2].coordinate, obs[0].coordinate) + great_circle_km(obs[2].coordinate, obs[1].coordinate)) / 2
    dlat = math.degrees(spread / EARTH_RADIUS_KM)
    shifted = rec("Aa bb", "Faro", 37.02 - dlat, -7.93)
    ms = match_records(obs[:2] + [shifted], obs)
    assert ms.pairs[2].coord_error_km == pytest.approx(spread, rel=1e-9)
    assert pair_weights(ms) == pytest.approx([1, 1, 0.5], abs=1e-9)
    w = weighted_counts(ms)
    assert (w.tp, w.fp, w.fn) == pytest.approx((2.5, 0.5, 0.5), abs=1e-9)
    weighted = distance_weighted_metrics(ms)
    assert weighted.recall == pytest.approx(2.5 / 3, abs=1e-9)
    assert weighted.recall < confusion_metrics(ms.counts()).recall


def test_weighting_needs_coordinates():
    bare = [rec("Aa bb", "Lisboa")]
    with pytest.raises(NoCoordinateDataError):
        weighted_counts(match_records(bare, bare))


def read(path):
    return path.read_text(encoding="utf-8")


def test_report_files_per_species_and_global(tmp_path):
    report = performance_report(OBS[:3], OBS, tmp_path)
    assert sorted(p.name for p in report.files) == ["aa_bb.md", "cc_dd.md", "global.md"]
    text = read(tmp_path / "global.md")
    assert "| plain | 3 | 0 | 1 |" in text
    assert "| recall | 0.750 |" in text
    assert "| Cc dd | 0 | 0 | 1 | n/a |" in text
    assert "Generated:" not in text


def test_report_with_empty_prediction(tmp_path):
    report = performance_report([], OBS, tmp_path)
    assert report.overall.metrics.recall == 0 and report.overall.metrics.precision is None
    assert "| precision | n/a |" in read(tmp_path / "global.md")


def test_report_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportIoError):
        performance_report(OBS, OBS, blocker / "reports")


def test_report_is_byte_deterministic(tmp_path):
    a = performance_report(OBS[::-1], OBS, tmp_path / "a", generated_at="2024-01-01T00:00:00Z")
    b = performance_report(OBS[::-1], OBS, tmp_path / "b", generated_at="2024-01-01T00:00:00Z")
    assert [read(p) for p in a.files] == [read(p) for p in b.files]
    assert "Generated: 2024-01-01T00:00:00Z" in read(a.files[0])
