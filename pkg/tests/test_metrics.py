import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from madacc.errors import DuplicateInstanceId, EmptyMatrix
from madacc.labels import LABELS, ArgLabel
from madacc.metrics import (
    ConfusionMatrix,
    Prediction,
    confusion,
    evaluate,
    f1_scores,
    format_report,
    macro_average,
)

MC, C, P = ArgLabel.MAJOR_CLAIM, ArgLabel.CLAIM, ArgLabel.PREMISE


def oracle_f1(rows):
    """Per-class F1 via 2tp / (2tp + fp + fn), written independently of the library."""
    out = []
    for k in range(3):
        tp = rows[k][k]
        fp = sum(rows[g][k] for g in range(3)) - tp
        fn = sum(rows[k]) - tp
        den = 2 * tp + fp + fn
        out.append(100.0 * 2 * tp / den if den else 0.0)
    return out


def random_rows(rng):
    return [[rng.randint(0, 50) for _ in range(3)] for _ in range(3)]


def test_confusion_counts():
    preds = [
        Prediction("a", P, P),
        Prediction("b", C, P),
        Prediction("c", C, C),
        Prediction("d", None, MC, failed=True),
    ]
    m = confusion(preds)
    assert m[P, P] == 1 and m[P, C] == 1 and m[C, C] == 1
    assert m.total == 3 and m.failed == 1
    assert m.support(P) == 2


def test_confusion_rejects_duplicates():
    with pytest.raises(DuplicateInstanceId, match="'a'"):
        confusion([Prediction("a", P, P), Prediction("a", C, C)])


def test_prediction_requires_label_unless_failed():
    with pytest.raises(ValueError):
        Prediction("a", None, P)


@pytest.mark.parametrize(
    "f1s, expected",
    [
        ((92.0, 74.5, 90.7), 85.7),
        ((90.6, 57.0, 88.0), 78.5),
        ((91.4, 58.5, 87.8), 79.2),
        ((92.2, 72.5, 90.1), 84.9),
    ],
)
def test_macro_rows(f1s, expected):
    assert round(macro_average(f1s), 1) == expected


def test_perfect_matrix():
    report = f1_scores(ConfusionMatrix.from_rows([[3, 0, 0], [0, 5, 0], [0, 0, 9]]))
    assert report.macro_f1 == report.weighted_f1 == 100.0


def test_zero_support_class_scores_zero():
    report = f1_scores(ConfusionMatrix.from_rows([[0, 0, 0], [0, 4, 1], [0, 2, 6]]))
    assert report.f1(MC) == 0.0
    assert report.per_class[MC].support == 0


def test_empty_matrix():
    with pytest.raises(EmptyMatrix):
        f1_scores(ConfusionMatrix.from_rows([[0] * 3] * 3, failed=4))
    with pytest.raises(EmptyMatrix):
        evaluate([])


def test_bad_matrix_shape():
    with pytest.raises(ValueError):
        ConfusionMatrix.from_rows([[1, 2], [3, 4]])
    with pytest.raises(ValueError):
        ConfusionMatrix.from_rows([[1, 0, 0], [0, -1, 0], [0, 0, 1]])


def test_matches_oracle_on_random_matrices():
    rng = random.Random(2024)
    checked = 0
    while checked < 1000:
        rows = random_rows(rng)
        if not any(map(sum, rows)):
            continue
        report = f1_scores(ConfusionMatrix.from_rows(rows))
        for label, expected in zip(LABELS, oracle_f1(rows)):
            assert abs(report.f1(label) - expected) <= 1e-9
        assert abs(report.macro_f1 - sum(oracle_f1(rows)) / 3) <= 1e-9
        checked += 1


def test_weighted_f1_hand_computed():
    rows = [[2, 0, 0], [0, 3, 1], [0, 1, 5]]
    report = f1_scores(ConfusionMatrix.from_rows(rows))
    expected = (2 * 100 + 4 * 75 + 6 * (100 * 10 / 12)) / 12
    assert report.weighted_f1 == pytest.approx(expected, abs=1e-9)


matrices = st.lists(st.lists(st.integers(0, 50), min_size=3, max_size=3), min_size=3, max_size=3).filter(
    lambda rows: any(map(sum, rows))
)


@given(matrices, st.permutations([0, 1, 2]))
def test_class_permutation_invariance(rows, perm):
    permuted = [[rows[perm[g]][perm[p]] for p in range(3)] for g in range(3)]
    a = f1_scores(ConfusionMatrix.from_rows(rows))
    b = f1_scores(ConfusionMatrix.from_rows(permuted))
    assert abs(a.macro_f1 - b.macro_f1) <= 1e-9
    assert abs(a.weighted_f1 - b.weighted_f1) <= 1e-9


@given(matrices, st.integers(2, 7))
def test_scale_invariance(rows, k):
    a = f1_scores(ConfusionMatrix.from_rows(rows))
    b = f1_scores(ConfusionMatrix.from_rows([[k * c for c in row] for row in rows]))
    assert abs(a.macro_f1 - b.macro_f1) <= 1e-9


@given(matrices)
def test_macro_between_min_and_max(rows):
    report = f1_scores(ConfusionMatrix.from_rows(rows))
    f1s = [report.f1(label) for label in LABELS]
    assert min(f1s) - 1e-9 <= report.macro_f1 <= max(f1s) + 1e-9


def test_format_report():
    report = f1_scores(ConfusionMatrix.from_rows([[0, 0, 0], [0, 4, 1], [0, 2, 6]], failed=3))
    text = format_report(report, "Vanilla")
    header, _, row, *_ = text.splitlines()
    assert header.split()[:3] == ["Method", "Macro", "F1"]
    cells = row.split()
    assert cells[0] == "Vanilla" and len(cells[1:]) == 5
    assert cells[3] == "0.0"
    assert all(len(c.split(".")[1]) == 1 for c in cells[1:])
    assert "scored: 13" in text
    assert "failed: 3 (excluded)" in text


def test_prediction_json_round_trip():
    for pred in (Prediction("x", C, P), Prediction("y", None, MC, failed=True)):
        assert Prediction.from_json(pred.to_json()) == pred
