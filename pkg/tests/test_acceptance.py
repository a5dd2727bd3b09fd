"""Acceptance gates. Each test prints one [ACCEPTANCE] pass/fail line;
run with ``pytest tests/test_acceptance.py -v -s``. The two training-based
gates are marked slow."""

import itertools
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ornadetect import eval as ev
from ornadetect import model, nn, pipeline, synth
from ornadetect.chunking import FrameLabels, PAD, TRUNCATED, labels_from_track, plan_chunks
from ornadetect.cli import main
from ornadetect.core import Event, OrnamentClass, ORNAMENT_CLASSES, parse_label_track, read_wav
from ornadetect.experiment import load_split, run_experiment
from ornadetect.model import ModelConfig, TrainConfig


def report(name: str, ok: bool, detail: str = ""):
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------- chunking

def test_chunking_oracle():
    """1000 random event lists: full-coverage labeling, sound masking,
    termination, under 5 seconds."""
    rng = np.random.default_rng(99)
    t0 = time.monotonic()
    classes = list(OrnamentClass)
    cases = 0
    for _ in range(1000):
        duration = rng.uniform(30.0, 120.0)
        events = []
        cursor = rng.uniform(0.0, 1.5)
        while True:
            dur = rng.uniform(0.1, 3.0)
            if cursor + dur > duration:
                break
            events.append(Event(cursor, cursor + dur,
                                classes[rng.integers(0, 6)]))
            cursor += dur + rng.uniform(0.02, 1.2)
        chunks = plan_chunks(duration, events, t=10.0)
        labeled = set()
        for c in chunks:
            for e in c.events:
                labeled.add((e.onset, e.offset, e.label))
            for s in c.dont_care_spans:
                assert s.end <= c.end + 1e-9
        for e in events:  # all durations < 10 here
            assert (e.onset, e.offset, e.label) in labeled
        for c in chunks:
            for e in c.events:
                assert e.offset <= c.end + 1e-9
        cases += 1
    elapsed = time.monotonic() - t0
    report("chunking-oracle", cases == 1000 and elapsed < 5.0,
           f"({cases} cases in {elapsed:.2f} s)")


# ---------------------------------------------------------------- masking

TINY = ModelConfig(
    input_bins=12,
    encoder_filters=(4, 6), decoder_filters=(6, 4),
    encoder_dilations=(1, 2), decoder_dilations=(2, 1),
    dropout=0.0, periodic_pad=2,
)


def test_masking_gradients():
    """Perturbing any masked frame's target changes no gradient component
    (exactly zero change); with no masked frames the loss equals unmasked
    cross-entropy to 1e-12."""
    rng = np.random.default_rng(1)
    params = {k: v.astype(np.float64)
              for k, v in model.init_params(TINY, rng).items()}
    x = rng.standard_normal((12, 16))
    kind = np.zeros(16, dtype=np.uint8)
    for i in (2, 7, 11):
        kind[i] = TRUNCATED
    kind[14:] = PAD
    ids = rng.integers(0, 7, 16).astype(np.int8)
    base = FrameLabels(ids, kind)

    _, grads_a = model.chunk_loss_and_grads(params, TINY, x, base, None,
                                            training=False)
    exact = True
    for masked_i in (2, 7, 11, 14, 15):
        for new_class in range(7):
            ids2 = ids.copy()
            ids2[masked_i] = new_class
            _, grads_b = model.chunk_loss_and_grads(
                params, TINY, x, FrameLabels(ids2, kind), None, training=False)
            for name in grads_a:
                if not np.array_equal(grads_a[name], grads_b[name]):
                    exact = False

    post = model.forward(params, TINY, x)
    unmasked = FrameLabels(ids, np.zeros(16, dtype=np.uint8))
    loss_masked, _ = model.masked_cross_entropy(post, unmasked)
    direct = -np.mean([np.log(post[ids[t], t]) for t in range(16)])
    close = abs(loss_masked - direct) < 1e-12
    report("masking", exact and close,
           f"(unmasked-CE delta {abs(loss_masked - direct):.2e})")


# ---------------------------------------------------------------- gradients

def _gradcheck(loss_fn, analytic, tensor, picks, rng, h=1e-5):
    worst = 0.0
    flat = tensor.reshape(-1)
    g = analytic.reshape(-1)
    for i in rng.choice(flat.size, size=min(picks, flat.size), replace=False):
        orig = flat[i]
        flat[i] = orig + h
        fp = loss_fn()
        flat[i] = orig - h
        fm = loss_fn()
        flat[i] = orig
        num = (fp - fm) / (2 * h)
        denom = max(abs(num), abs(g[i]), 1e-8)
        worst = max(worst, abs(num - g[i]) / denom)
    return worst


def test_gradient_suite():
    """Central finite differences against every kernel and the full
    2-layer ED-TCN, float64, relative error < 1e-4, within 60 seconds."""
    rng = np.random.default_rng(7)
    t0 = time.monotonic()
    worst = 0.0

    # individual kernels driven through weighted-sum losses
    x = rng.standard_normal((5, 8))
    gout_pad = rng.standard_normal((9, 8))
    gx = nn.periodic_pad_backward(gout_pad, 2)
    worst = max(worst, _gradcheck(
        lambda: float((nn.periodic_pad(x, 2) * gout_pad).sum()), gx, x, 20, rng))

    xc = rng.standard_normal((3, 10))
    w = rng.standard_normal((2, 3, 5))
    b = rng.standard_normal(2)
    gout = rng.standard_normal((2, 10))
    gxc, gw, gb = nn.dilated_conv1d_backward(xc, w, gout, 2)
    conv_loss = lambda: float((nn.dilated_conv1d(xc, w, b, 2) * gout).sum())
    worst = max(worst, _gradcheck(conv_loss, gxc, xc, 15, rng))
    worst = max(worst, _gradcheck(conv_loss, gw, w, 15, rng))
    worst = max(worst, _gradcheck(conv_loss, gb, b, 2, rng))

    xp = rng.standard_normal((3, 12))
    gp = rng.standard_normal((3, 6))
    _, idx = nn.temporal_maxpool(xp)
    worst = max(worst, _gradcheck(
        lambda: float((nn.temporal_maxpool(xp)[0] * gp).sum()),
        nn.temporal_maxpool_backward(gp, idx), xp, 20, rng))

    xu = rng.standard_normal((2, 6))
    gu = rng.standard_normal((2, 12))
    worst = max(worst, _gradcheck(
        lambda: float((nn.temporal_upsample(xu) * gu).sum()),
        nn.temporal_upsample_backward(gu), xu, 12, rng))

    xd = rng.standard_normal((4, 6))
    ud = rng.standard_normal((3, 4))
    bd = rng.standard_normal(3)
    gd = rng.standard_normal((3, 6))
    gxd, gud, gbd = nn.dense_timedistributed_backward(xd, ud, gd)
    dense_loss = lambda: float((nn.dense_timedistributed(xd, ud, bd) * gd).sum())
    worst = max(worst, _gradcheck(dense_loss, gxd, xd, 15, rng))
    worst = max(worst, _gradcheck(dense_loss, gud, ud, 12, rng))

    z = rng.standard_normal((5, 4))
    gz = rng.standard_normal((5, 4))
    worst = max(worst, _gradcheck(
        lambda: float((nn.softmax_frames(z) * gz).sum()),
        nn.softmax_frames_backward(nn.softmax_frames(z), gz), z, 20, rng))

    xr = rng.standard_normal((3, 5))
    gr = rng.standard_normal((3, 5))
    worst = max(worst, _gradcheck(
        lambda: float((nn.relu(xr) * gr).sum()),
        nn.relu_backward(xr, gr), xr, 15, rng))

    # full 2-layer network against the masked loss
    params = {k: v.astype(np.float64)
              for k, v in model.init_params(TINY, rng).items()}
    xn = rng.standard_normal((12, 16))
    kind = np.zeros(16, dtype=np.uint8)
    kind[5] = TRUNCATED
    kind[14:] = PAD
    labels = FrameLabels(rng.integers(0, 7, 16).astype(np.int8), kind)
    _, grads = model.chunk_loss_and_grads(params, TINY, xn, labels, None,
                                          training=False)

    def net_loss():
        post = model.forward(params, TINY, xn)
        loss, _ = model.masked_cross_entropy(post, labels)
        return loss

    for name in sorted(params):
        worst = max(worst, _gradcheck(net_loss, grads[name], params[name],
                                      6, rng))
    elapsed = time.monotonic() - t0
    report("gradient-suite", worst < 1e-4 and elapsed < 60.0,
           f"(worst rel err {worst:.2e}, {elapsed:.1f} s)")


# ------------------------------------------------- periodic pad & dilation

def test_periodic_pad_and_dilation():
    """Cyclic-row equality for all (F, p) with p < F <= 16, and impulse
    responses exactly at the dilation offsets for r in 1..4."""
    rng = np.random.default_rng(3)
    ok = True
    for f in range(1, 17):
        x = rng.standard_normal((f, 4))
        for p in range(0, f):
            out = nn.periodic_pad(x, p)
            for i in range(f + 2 * p):
                if not np.array_equal(out[i], x[(i - p) % f]):
                    ok = False
    combos = 0
    for r in (1, 2, 3, 4):
        for d in (3, 5):
            x = np.zeros((1, 64))
            x[0, 32] = 1.0
            w = np.ones((1, 1, d))
            out = nn.dilated_conv1d(x, w, np.zeros(1), r)
            nz = set((np.flatnonzero(out[0]) - 32).tolist())
            half = (d - 1) // 2
            expect = {r * (j - half) for j in range(d)}
            if nz != expect:
                ok = False
            combos += 1
    report("periodic-pad-and-dilation", ok,
           f"(rows exhaustive F<=16, {combos} impulse combos)")


# ---------------------------------------------------------------- metrics

def _brute_max_matching(truths, preds, collar):
    def eligible(tr, pr):
        return (abs(tr.onset - pr.onset) <= collar.collar_seconds
                and abs(tr.offset - pr.offset) <= collar.collar_seconds)

    best = 0
    for size in range(min(len(truths), len(preds)), 0, -1):
        if size <= best:
            break
        for t_sub in itertools.combinations(range(len(truths)), size):
            for p_perm in itertools.permutations(range(len(preds)), size):
                if all(eligible(truths[t], preds[p])
                       for t, p in zip(t_sub, p_perm)):
                    best = size
                    break
            if best == size:
                break
        if best:
            break
    return best


def test_metric_oracles():
    """Matcher equals exhaustive bipartite matching on 500 random cases;
    F1 identity holds; kappa reproduces the hand case and kappa(A,A)=1."""
    rng = np.random.default_rng(17)
    collar = ev.CollarConfig(0.2)
    ok = True
    for _ in range(500):
        def mk(n):
            out, t = [], 0.0
            for _ in range(n):
                t += rng.uniform(0.0, 0.8)
                dur = rng.uniform(0.1, 1.2)
                out.append(Event(round(t, 3), round(t + dur, 3),
                                 OrnamentClass.GAMAK))
                t += dur
            return out

        truths = mk(int(rng.integers(0, 7)))
        preds = mk(int(rng.integers(0, 7)))
        got = len(ev.match_events(truths, preds, collar))
        if got != _brute_max_matching(truths, preds, collar):
            ok = False

    for _ in range(50):
        truth = rng.integers(0, 7, 300)
        pred = rng.integers(0, 7, 300)
        ms = ev.frame_metrics(pred, truth)
        for c in ms.scored_classes():
            cc = ms.per_class[c]
            expect = (2 * cc.precision * cc.recall /
                      (cc.precision + cc.recall)
                      if cc.precision + cc.recall else 0.0)
            if abs(cc.f1 - expect) > 1e-12:
                ok = False

    hand = ev.cohen_kappa(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0]))
    identical = ev.cohen_kappa(np.array([1, 2, 3, 0, 5]),
                               np.array([1, 2, 3, 0, 5]))
    ok = ok and abs(hand - 0.5) < 1e-12 and identical == 1.0
    report("metric-oracles", ok,
           f"(500 matcher cases, kappa hand case {hand:.3f})")


# ------------------------------------------------------------ end-to-end

@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance-data")
    train_dir = root / "train"
    assert main(["synth", "--n", "40", "--seed", "7",
                 "--out", str(train_dir)]) == 0
    held_dir = root / "held"
    assert main(["synth", "--n", "10", "--seed", "777",
                 "--out", str(held_dir)]) == 0
    return train_dir, held_dir


def _load_clips(root: Path):
    from ornadetect.core import load_manifest

    manifest = load_manifest(root / "manifest.json")
    clips = []
    for entry in manifest:
        signal, _ = read_wav(manifest.wav_path(entry.clip_id))
        track = parse_label_track(
            (root / "labels" / f"{entry.clip_id}.tsv").read_text(),
            entry.clip_id)
        clips.append((entry.clip_id, signal, track))
    return clips


def _score_clips(ckpt, clips, plan):
    accs, pairs = [], []
    for cid, signal, track in clips:
        pred = pipeline.predict_signal(ckpt, signal, plan, clip_id=cid)
        truth = labels_from_track(track.events, pred.hop_seconds,
                                  len(pred.frame_ids))
        accs.append(ev.frame_accuracy(pred.frame_ids, truth))
        pairs.append((pred.track, track))
    metrics = ev.event_metrics_many(pairs, ev.CollarConfig(0.2))
    return float(np.mean(accs)), metrics.macro()["f1"]


@pytest.mark.slow
def test_end_to_end_overfit(corpus):
    """Full ED-TCN (F=120, masking, periodic padding, dilation) on the
    40-clip corpus: train frame accuracy >= 0.95, train event F1 >= 0.90,
    held-out event F1 >= 0.75, at most 500 epochs, 15 minutes wall."""
    train_dir, held_dir = corpus
    t0 = time.monotonic()
    plan = pipeline.default_plan(bins=120)
    mcfg = ModelConfig(input_bins=120)
    dataset = []
    train_clips = _load_clips(train_dir)
    for _, signal, track in train_clips:
        dataset.extend(pipeline.build_training_chunks(signal, track, plan,
                                                      mcfg))
    tcfg = TrainConfig(epochs=500, batch_size=8, seed=0, target_loss=0.05)
    result = model.train(dataset, mcfg, tcfg)
    epochs = len(result.loss_curve)

    train_acc, train_f1 = _score_clips(result.checkpoint, train_clips, plan)
    held_acc, held_f1 = _score_clips(result.checkpoint,
                                     _load_clips(held_dir), plan)
    elapsed = time.monotonic() - t0
    ok = (train_acc >= 0.95 and train_f1 >= 0.90 and held_f1 >= 0.75
          and epochs <= 500 and elapsed <= 900.0)
    report("end-to-end-overfit", ok,
           f"(train acc {train_acc:.3f}, train F1 {train_f1:.3f}, "
           f"held F1 {held_f1:.3f} [acc {held_acc:.3f}], "
           f"{epochs} epochs, {elapsed:.0f} s)")


ABLATION_MODEL = ModelConfig(
    input_bins=12,
    encoder_filters=(16, 32, 64), decoder_filters=(64, 32, 16),
    encoder_dilations=(1, 2, 3), decoder_dilations=(3, 2, 1),
    dropout=0.3, periodic_pad=2,
)


@pytest.mark.slow
def test_ablation_dont_care_direction(tmp_path):
    """Relabeling truncated frames with their class (the no-masking
    condition) must reduce held-out event F1, averaged over 3 seeds."""
    data_dir = tmp_path / "ablation-train"
    synth.synth_dataset(data_dir, 14, clip_seconds=30.0, seed=4242)
    held_dir = tmp_path / "ablation-held"
    synth.synth_dataset(held_dir, 8, clip_seconds=30.0, seed=31337)

    plan = pipeline.default_plan(bins=12)
    train_clips = _load_clips(data_dir)
    held_clips = _load_clips(held_dir)

    truncated_chunks = 0
    datasets = {}
    for use_dc in (True, False):
        mcfg = replace(ABLATION_MODEL, use_dont_care=use_dc)
        chunks = []
        for _, signal, track in train_clips:
            chunks.extend(pipeline.build_training_chunks(signal, track, plan,
                                                         mcfg))
        datasets[use_dc] = (mcfg, chunks)
        if use_dc:
            truncated_chunks = sum(
                1 for _, lab in chunks if (lab.kind == TRUNCATED).any())
    assert truncated_chunks > 0, "ablation data must contain truncations"

    scores = {True: [], False: []}
    for seed in (0, 1, 2):
        for use_dc in (True, False):
            mcfg, chunks = datasets[use_dc]
            tcfg = TrainConfig(epochs=150, batch_size=8, seed=seed,
                               target_loss=0.03)
            result = model.train(chunks, mcfg, tcfg)
            _, f1 = _score_clips(result.checkpoint, held_clips, plan)
            scores[use_dc].append(f1)

    margin = float(np.mean(scores[True]) - np.mean(scores[False]))
    report(
        "ablation-dont-care-direction", margin > 0.0,
        f"(with {[round(s, 3) for s in scores[True]]}, "
        f"without {[round(s, 3) for s in scores[False]]}, margin {margin:+.3f})",
    )


def test_determinism(tmp_path):
    """Identical seed and config give byte-identical checkpoints and
    reports across two runs."""
    from ornadetect.core import load_manifest

    data_dir = tmp_path / "det-data"
    synth.synth_dataset(data_dir, 6, clip_seconds=6.0, seed=5)
    manifest = load_manifest(data_dir / "manifest.json")
    plan = pipeline.default_plan(bins=12, chunk_seconds=6.0)
    mcfg = ModelConfig(
        input_bins=12,
        encoder_filters=(4, 8), decoder_filters=(8, 4),
        encoder_dilations=(1, 2), decoder_dilations=(2, 1),
        dropout=0.3,
    )
    tcfg = TrainConfig(epochs=5, batch_size=4, seed=123)
    split = load_split("exp4")
    for d in ("r1", "r2"):
        run_experiment(manifest, data_dir / "labels", split, plan, mcfg,
                       tcfg, tmp_path / d)
    same_ckpt = ((tmp_path / "r1" / "model.ckpt").read_bytes()
                 == (tmp_path / "r2" / "model.ckpt").read_bytes())
    same_report = ((tmp_path / "r1" / "report.json").read_bytes()
                   == (tmp_path / "r2" / "report.json").read_bytes())
    report("determinism", same_ckpt and same_report,
           "(checkpoint and report bytes equal)")
