import itertools

import numpy as np
import pytest

from ornadetect.core import DONT_CARE, Event, LabelTrack, OrnamentClass
from ornadetect.eval import (
    CollarConfig,
    cohen_kappa,
    confusion_matrix,
    event_metrics,
    frame_accuracy,
    frame_metrics,
    match_events,
)

K, ME, MU, H, AN, G = OrnamentClass


def track(*events):
    return LabelTrack("t", tuple(events))


# --- frame metrics ------------------------------------------------------------

def test_frame_metrics_perfect():
    ids = np.array([0, 1, 1, 2, 0, 6, 6, 3])
    ms = frame_metrics(ids, ids)
    assert ms.macro() == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    for c in ms.scored_classes():
        assert ms.per_class[c].f1 == 1.0


def test_frame_metrics_all_background_prediction():
    truth = np.array([0, 1, 1, 5, 5, 5])
    pred = np.zeros(6, dtype=int)
    ms = frame_metrics(pred, truth)
    assert ms.per_class[K].recall == 0.0
    assert ms.per_class[AN].recall == 0.0


def test_frame_metrics_hand_counted_case():
    # 10 frames, two confusions: one Kan frame predicted Meend, one
    # background frame predicted Gamak
    truth = np.array([1, 1, 1, 0, 0, 4, 4, 4, 0, 0])
    pred = np.array([1, 1, 2, 0, 0, 4, 4, 4, 6, 0])
    ms = frame_metrics(pred, truth)
    kan = ms.per_class[K]
    assert (kan.tp, kan.fp, kan.fn) == (2, 0, 1)
    meend = ms.per_class[ME]
    assert (meend.tp, meend.fp, meend.fn) == (0, 1, 0)
    nyas = ms.per_class[H]
    assert (nyas.tp, nyas.fp, nyas.fn) == (3, 0, 0)
    gamak = ms.per_class[G]
    assert (gamak.tp, gamak.fp, gamak.fn) == (0, 1, 0)
    assert kan.precision == 1.0
    assert kan.recall == pytest.approx(2 / 3)
    assert kan.f1 == pytest.approx(2 * (2 / 3) / (1 + 2 / 3))


def test_frame_metrics_excludes_dagger_truth():
    truth = np.array([1, DONT_CARE, 1])
    pred = np.array([1, 5, 2])
    ms = frame_metrics(pred, truth)
    kan = ms.per_class[K]
    assert (kan.tp, kan.fp, kan.fn) == (1, 0, 1)
    assert ms.per_class[AN].fp == 0  # the masked frame never counts


def test_frame_metrics_length_mismatch():
    with pytest.raises(ValueError, match="length"):
        frame_metrics(np.zeros(3), np.zeros(4))


def test_f1_identity_random_reports():
    rng = np.random.default_rng(0)
    for _ in range(50):
        truth = rng.integers(0, 7, 200)
        pred = rng.integers(0, 7, 200)
        ms = frame_metrics(pred, truth)
        for c in ms.scored_classes():
            cc = ms.per_class[c]
            p, r = cc.precision, cc.recall
            expect = 2 * p * r / (p + r) if p + r else 0.0
            assert cc.f1 == pytest.approx(expect, abs=1e-12)


# --- confusion matrix ---------------------------------------------------------

def test_confusion_perfect_diagonal():
    ids = np.array([1, 2, 3, 4, 5, 6, 6, 0])
    mat = confusion_matrix(ids, ids)
    assert np.array_equal(np.diag(mat), [1, 1, 1, 1, 1, 2])
    assert mat.sum() == 7  # background frame excluded


def test_confusion_single_offdiagonal():
    truth = np.full(5, int(K))
    pred = np.full(5, int(ME))
    mat = confusion_matrix(pred, truth)
    assert mat[0, 1] == 5
    assert mat.sum() == 5


def test_confusion_hand_tally():
    truth = np.array([1, 1, 2, 2, 3, 0, 6, 6, 6, DONT_CARE,
                      4, 4, 5, 5, 5, 1, 2, 3, 0, 6])
    pred = np.array([1, 2, 2, 2, 3, 3, 6, 1, 6, 1,
                     4, 5, 5, 5, 0, 1, 2, 3, 0, 6])
    mat = confusion_matrix(pred, truth)
    # hand count: pairs with both sides an ornament class
    expected = np.zeros((6, 6), dtype=int)
    for t, p in zip(truth, pred):
        if t >= 1 and p >= 1:
            expected[t - 1, p - 1] += 1
    assert np.array_equal(mat, expected)
    assert mat[0, 0] == 2 and mat[0, 1] == 1  # spot checks of the tally
    assert mat[5, 0] == 1 and mat[5, 5] == 3


# --- event metrics -------------------------------------------------------------

def brute_force_max_matching(truths, preds, collar):
    """Exhaustive search over one-to-one matchings."""
    def eligible(tr, pr):
        if abs(tr.onset - pr.onset) > collar.collar_seconds:
            return False
        if collar.onset_only:
            return True
        return abs(tr.offset - pr.offset) <= collar.collar_seconds

    best = 0
    idx = range(len(preds))
    for size in range(min(len(truths), len(preds)), best, -1):
        for t_sub in itertools.combinations(range(len(truths)), size):
            for p_perm in itertools.permutations(idx, size):
                if all(eligible(truths[t], preds[p])
                       for t, p in zip(t_sub, p_perm)):
                    return size
    return 0


def test_event_metrics_identical():
    t = track(Event(0.0, 1.0, K), Event(2.0, 3.0, G))
    ms = event_metrics(t, t)
    assert ms.macro()["f1"] == 1.0


def test_event_metrics_within_collar():
    truth = track(Event(1.0, 2.0, AN))
    pred = LabelTrack("p", (Event(1.15, 2.15, AN),))
    ms = event_metrics(pred, truth, CollarConfig(0.2))
    assert ms.macro()["f1"] == 1.0


def test_event_metrics_outside_collar():
    truth = track(Event(1.0, 2.0, AN))
    pred = LabelTrack("p", (Event(1.25, 2.25, AN),))
    ms = event_metrics(pred, truth, CollarConfig(0.2))
    assert ms.macro()["precision"] == 0.0
    assert ms.macro()["recall"] == 0.0


def test_event_metrics_class_must_match():
    truth = track(Event(1.0, 2.0, AN))
    pred = LabelTrack("p", (Event(1.0, 2.0, ME),))
    ms = event_metrics(pred, truth)
    assert ms.per_class[AN].fn == 1
    assert ms.per_class[ME].fp == 1


def test_event_metrics_onset_only_mode():
    truth = track(Event(1.0, 2.0, AN))
    pred = LabelTrack("p", (Event(1.1, 3.5, AN),))
    assert event_metrics(pred, truth).per_class[AN].tp == 0
    assert event_metrics(
        pred, truth, CollarConfig(0.2, onset_only=True)
    ).per_class[AN].tp == 1


def _random_case(rng, max_per_side=6):
    def mk(n):
        events = []
        t = 0.0
        for _ in range(n):
            t += rng.uniform(0.0, 0.8)
            dur = rng.uniform(0.1, 1.2)
            events.append(Event(round(t, 3), round(t + dur, 3), G))
            t += dur
        return events

    return mk(rng.integers(0, max_per_side + 1)), mk(rng.integers(0, max_per_side + 1))


def test_matcher_equals_exhaustive_oracle():
    rng = np.random.default_rng(7)
    collar = CollarConfig(0.2)
    for _ in range(500):
        truths, preds = _random_case(rng)
        got = len(match_events(truths, preds, collar))
        want = brute_force_max_matching(truths, preds, collar)
        assert got == want, (truths, preds)


def test_matcher_beats_plain_greedy_on_adversarial_case():
    # plain nearest-first greedy strands the second truth here; the
    # augmenting pass must recover both matches
    truths = [Event(1.0, 1.2, G), Event(1.25, 1.45, G)]
    preds = [Event(1.10, 1.30, G), Event(0.85, 1.05, G)]
    collar = CollarConfig(0.2)
    assert len(match_events(truths, preds, collar)) == \
        brute_force_max_matching(truths, preds, collar) == 2


def test_infinite_collar_reduces_to_counting():
    rng = np.random.default_rng(3)
    for _ in range(100):
        truths, preds = _random_case(rng)
        collar = CollarConfig(1e9)
        got = len(match_events(truths, preds, collar))
        assert got == min(len(truths), len(preds))


# --- kappa ----------------------------------------------------------------------

def test_kappa_identical_is_one():
    a = np.array([1, 2, 0, 5, 5, 6])
    assert cohen_kappa(a, a) == 1.0


def test_kappa_hand_computed_binary_case():
    a = np.array([1, 1, 0, 0])
    b = np.array([1, 0, 0, 0])
    # p_o = 0.75; marginals (0.5, 0.5) x (0.25, 0.75) -> p_e = 0.5; kappa = 0.5
    assert cohen_kappa(a, b) == pytest.approx(0.5)


def test_kappa_symmetric():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 4, 500)
    b = rng.integers(0, 4, 500)
    assert cohen_kappa(a, b) == pytest.approx(cohen_kappa(b, a), abs=1e-12)


def test_kappa_independent_labels_near_zero():
    rng = np.random.default_rng(12)
    a = rng.integers(0, 3, 100_000)
    b = rng.integers(0, 3, 100_000)
    assert abs(cohen_kappa(a, b)) < 0.02


def test_kappa_excludes_dagger_frames():
    a = np.array([1, 1, DONT_CARE, 2])
    b = np.array([1, DONT_CARE, 1, 2])
    # only frames 0 and 3 remain, in agreement
    assert cohen_kappa(a, b) == 1.0


def test_kappa_no_overlap_raises():
    a = np.array([DONT_CARE, 1])
    b = np.array([1, DONT_CARE])
    with pytest.raises(ValueError, match="no frames"):
        cohen_kappa(a, b)


def test_kappa_degenerate_marginals():
    a = np.array([2, 2, 2, 2])
    assert cohen_kappa(a, a) == 1.0
    b = np.array([2, 2, 2, 3])
    assert cohen_kappa(a, b) == 0.0


def test_frame_accuracy():
    truth = np.array([0, 1, 1, DONT_CARE])
    pred = np.array([0, 1, 2, 5])
    assert frame_accuracy(pred, truth) == pytest.approx(2 / 3)
