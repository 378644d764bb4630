"""Training loops: reproducibility, loss descent, geometry update rules."""

import numpy as np
import pytest

from ecgauth.encoder import EncoderConfig, encode_signal_batch, init_params
from ecgauth.errors import ConfigurationError, InputError, ParameterError
from ecgauth.losses import LossWeights, compute_medoid
from ecgauth.signals import IdentityMorphology, segment_beats, synth_ecg
from ecgauth.training import (
    TrainConfig,
    finetune,
    pretrain,
    recompute_centers,
)

SMALL_ENC = EncoderConfig(n_blocks=1, channels=(4,), kernel_size=3,
                          embed_dim=8, proj_dim=4)
HALF = 64  # 128-sample windows keep these loops fast


def _labeled_segments(n_ids=3, n_beats=12, seed=0):
    out = []
    for sid in range(1, n_ids + 1):
        rng = np.random.default_rng([seed, sid])
        morph = IdentityMorphology.random(rng)
        rec = synth_ecg(morph, n_beats=n_beats, fs=250.0,
                        seed=seed * 1000 + sid, subject_id=sid)
        segs = segment_beats(rec, rec.ground_truth_peaks, half_window=HALF)
        out.extend((seg, sid) for seg in segs)
    return out


def _pairs(labeled):
    texts = {
        1: "rr intervals are steady near 0.8 seconds",
        2: "qrs width is 0.09 seconds with high variability",
        3: "heart rate around 90 with short rr intervals",
    }
    return [(seg, texts[sid]) for seg, sid in labeled]


@pytest.fixture(scope="module")
def labeled():
    return _labeled_segments()


# ----------------------------------------------------------------------
# config validation

def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(epochs=-1)
    with pytest.raises(ParameterError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ParameterError):
        TrainConfig(optimizer="rmsprop")


# ----------------------------------------------------------------------
# pretraining

def test_pretrain_reduces_contrastive_loss(labeled):
    cfg = TrainConfig(batch_size=8, epochs=4, learning_rate=1e-3, seed=1)
    _, report = pretrain(_pairs(labeled), cfg, encoder_config=SMALL_ENC)
    first = report.epochs[0].losses["contrastive"]
    last = report.epochs[-1].losses["contrastive"]
    assert last < first
    assert report.stage == "pretrain"
    assert len(report.epochs) == 4


def test_pretrain_is_deterministic(labeled):
    cfg = TrainConfig(batch_size=8, epochs=2, seed=5)
    mp_a, rep_a = pretrain(_pairs(labeled), cfg, encoder_config=SMALL_ENC)
    mp_b, rep_b = pretrain(_pairs(labeled), cfg, encoder_config=SMALL_ENC)
    assert mp_a.checksum() == mp_b.checksum()
    assert [e.losses for e in rep_a.epochs] == [e.losses for e in rep_b.epochs]


def test_pretrain_zero_epochs_returns_fresh_init(labeled):
    pairs = _pairs(labeled)
    cfg = TrainConfig(batch_size=8, epochs=0, seed=9)
    mp, report = pretrain(pairs, cfg, encoder_config=SMALL_ENC)
    window_len = pairs[0][0].window.size
    assert mp.checksum() == init_params(SMALL_ENC, window_len, seed=9).checksum()
    assert report.epochs == []


def test_pretrain_input_validation(labeled):
    pairs = _pairs(labeled)
    with pytest.raises(ConfigurationError):
        pretrain(pairs, TrainConfig(batch_size=1), encoder_config=SMALL_ENC)
    with pytest.raises(InputError):
        pretrain(pairs[:1], TrainConfig(), encoder_config=SMALL_ENC)


def test_pretrain_report_lines(labeled):
    cfg = TrainConfig(batch_size=8, epochs=1, seed=2)
    _, report = pretrain(_pairs(labeled), cfg, encoder_config=SMALL_ENC)
    lines = report.to_lines()
    assert lines[0] == "stage=pretrain"
    assert lines[1].startswith("epoch 0 contrastive=")
    assert lines[-1].startswith("checksum=")


# ----------------------------------------------------------------------
# fine-tuning

def _init_mp(labeled, seed=3):
    window_len = labeled[0][0].window.size
    return init_params(SMALL_ENC, window_len, seed=seed)


def test_finetune_reduces_total_loss(labeled):
    cfg = TrainConfig(batch_size=8, epochs=5, learning_rate=5e-4, seed=4)
    _, _, report = finetune(labeled, _init_mp(labeled), cfg)
    assert report.epochs[-1].losses["total"] < report.epochs[0].losses["total"]
    assert report.stage == "finetune"


def test_finetune_is_deterministic(labeled):
    cfg = TrainConfig(batch_size=8, epochs=2, seed=6)
    mp = _init_mp(labeled)
    mp_a, geo_a, _ = finetune(labeled, mp, cfg)
    mp_b, geo_b, _ = finetune(labeled, mp, cfg)
    assert mp_a.checksum() == mp_b.checksum()
    for cid in geo_a:
        assert np.array_equal(geo_a[cid].prototype, geo_b[cid].prototype)
        assert np.array_equal(geo_a[cid].reciprocal, geo_b[cid].reciprocal)
        assert geo_a[cid].margin == geo_b[cid].margin


def test_finetune_only_updates_signal_branch(labeled):
    cfg = TrainConfig(batch_size=8, epochs=1, seed=7)
    mp = _init_mp(labeled)
    before = {k: v.copy() for k, v in mp.params.items()}
    after, _, _ = finetune(labeled, mp, cfg)
    for key in before:
        frozen = not key.startswith(("stem.", "block", "embed."))
        unchanged = np.array_equal(before[key], after.params[key])
        assert unchanged == frozen, key
    # the input is never mutated
    assert all(np.array_equal(before[k], mp.params[k]) for k in before)


def test_finetune_zero_gamma_leaves_reciprocals_at_init(labeled):
    weights = LossWeights(alpha=0.1, beta=1.0, gamma=0.0)
    cfg = TrainConfig(batch_size=8, epochs=2, seed=11, weights=weights)
    _, geometry, _ = finetune(labeled, _init_mp(labeled), cfg)
    class_ids = sorted(geometry)
    dim = geometry[class_ids[0]].reciprocal.size
    expected = np.random.default_rng(11).normal(
        0.0, 0.1, size=(len(class_ids), dim))
    for k, cid in enumerate(class_ids):
        assert np.array_equal(geometry[cid].reciprocal, expected[k])
        assert geometry[cid].margin == 1.0


def test_finetune_zero_alpha_and_beta_still_run(labeled):
    weights = LossWeights(alpha=0.0, beta=0.0, gamma=0.1)
    cfg = TrainConfig(batch_size=8, epochs=1, seed=12, weights=weights)
    _, geometry, report = finetune(labeled, _init_mp(labeled), cfg)
    assert report.epochs[0].losses["self"] == 0.0
    assert report.epochs[0].losses["proto"] == 0.0
    assert set(geometry) == {1, 2, 3}


def test_finetune_margins_never_shrink(labeled):
    # the repulsion gradient on the margin is non-positive, so margins can
    # only grow from their 1.0 start (the >= 0 clamp is a safety net)
    cfg = TrainConfig(batch_size=8, epochs=3, seed=13)
    _, geometry, _ = finetune(labeled, _init_mp(labeled), cfg)
    assert all(g.margin >= 1.0 for g in geometry.values())


def test_finetune_final_centers_are_current_medoids(labeled):
    cfg = TrainConfig(batch_size=8, epochs=2, seed=14)
    mp, geometry, _ = finetune(labeled, _init_mp(labeled), cfg)
    for cid in geometry:
        windows = np.stack([seg.window for seg, sid in labeled if sid == cid])
        emb = encode_signal_batch(mp, windows)
        assert np.array_equal(geometry[cid].center, compute_medoid(emb))


def test_finetune_rejects_thin_classes(labeled):
    thin = labeled + [(labeled[0][0], 99)]  # one lone segment for id 99
    with pytest.raises(ConfigurationError):
        finetune(thin, _init_mp(labeled), TrainConfig())
    with pytest.raises(InputError):
        finetune([], _init_mp(labeled), TrainConfig())


def test_finetune_sgd_path(labeled):
    cfg = TrainConfig(batch_size=8, epochs=1, seed=15, optimizer="sgd",
                      momentum=0.9, learning_rate=1e-4)
    mp_a, _, _ = finetune(labeled, _init_mp(labeled), cfg)
    mp_b, _, _ = finetune(labeled, _init_mp(labeled), cfg)
    assert mp_a.checksum() == mp_b.checksum()


# ----------------------------------------------------------------------
# center recomputation

def test_recompute_centers_matches_direct_medoids(labeled):
    mp = _init_mp(labeled)
    before = mp.checksum()
    geometry = recompute_centers(mp, labeled)
    assert mp.checksum() == before
    for cid, geo in geometry.items():
        windows = np.stack([seg.window for seg, sid in labeled if sid == cid])
        emb = encode_signal_batch(mp, windows)
        assert np.array_equal(geo.center, compute_medoid(emb))
        assert np.array_equal(geo.prototype, geo.center)
        assert not geo.reciprocal.any()
        assert geo.margin == 1.0


def test_recompute_centers_preserves_existing_geometry(labeled):
    mp = _init_mp(labeled)
    first = recompute_centers(mp, labeled)
    for geo in first.values():
        geo.prototype += 0.5
        geo.reciprocal += 1.0
    second = recompute_centers(mp, labeled, geometry=first)
    for cid in first:
        assert np.array_equal(second[cid].prototype, first[cid].prototype)
        assert np.array_equal(second[cid].reciprocal, first[cid].reciprocal)
        assert second[cid].margin == first[cid].margin
        assert np.array_equal(second[cid].center, first[cid].center)
