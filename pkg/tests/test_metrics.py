import math

import numpy as np
import pytest

from mmfilter.exceptions import DataError
from mmfilter.metrics import (
    compute_metrics,
    metric_acc2_f1,
    metric_acc7,
    metric_corr,
    metric_mae,
    round_half_away,
)


def test_round_half_away_from_zero():
    np.testing.assert_array_equal(round_half_away(np.array([-2.5, -0.5, 0.5, 1.5, 2.4])), [-3, -1, 1, 2, 2])


def test_acc7_rounding_match():
    assert metric_acc7([2.4], [2]) == 1.0


def test_acc7_clamp_match():
    assert metric_acc7([3.7], [3]) == 1.0


def test_acc7_half_away_mismatch():
    assert metric_acc7([-0.5], [0]) == 0.0


def test_acc2_hand_example():
    acc2, f1 = metric_acc2_f1([1, 1, -1, -1], [2, -2, -1, -3])
    assert acc2 == 0.75
    # precision 1/2, recall 1/1
    assert f1 == pytest.approx(2 / 3, rel=1e-15)


def test_f1_without_positives_is_zero():
    acc2, f1 = metric_acc2_f1([-1, -2], [-1, -3])
    assert acc2 == 1.0 and f1 == 0.0


def test_acc2_excludes_zero_labels():
    assert metric_acc2_f1([1, -1, 5], [1, -1, 0])[0] == 1.0
    assert metric_acc2_f1([1, -1, 5], [1, -1, 0], zero_policy="negative")[0] == pytest.approx(2 / 3)


def test_acc2_all_zero_labels_flagged():
    report = compute_metrics([0.3, -0.2], [0.0, 0.0])
    assert math.isnan(report.acc2) and math.isnan(report.f1)
    assert report.notes


def test_mae_hand_example():
    assert metric_mae([1, -1], [1, 1]) == 1.0


def test_constant_predictions_have_zero_corr():
    assert metric_corr([0.5, 0.5, 0.5], [1, 2, 3]) == 0.0


def test_perfect_predictor():
    y = np.array([-2.6, -1.0, 0.4, 2.2, 3.0])
    r = compute_metrics(y, y)
    assert (r.mae, r.corr, r.acc7, r.acc2, r.f1) == (0.0, 1.0, 1.0, 1.0, 1.0)


def test_report_ranges(rng):
    p, y = rng.normal(size=100), rng.uniform(-3, 3, size=100)
    r = compute_metrics(p, y)
    assert 0 <= r.acc7 <= 1 and 0 <= r.acc2 <= 1 and 0 <= r.f1 <= 1
    assert r.mae >= 0 and -1 <= r.corr <= 1


def test_report_lines_are_key_value():
    lines = compute_metrics([1.0, -1.0], [1.0, 1.0]).lines()
    assert [line.split("=")[0] for line in lines] == ["acc7", "acc2", "f1", "mae", "corr"]
    assert lines[3] == "mae=1.000000"


def test_length_mismatch():
    with pytest.raises(DataError):
        metric_mae([1, 2], [1])
