"""Dual encoder: forward/backward correctness, hashing, checkpoints."""

import numpy as np
import pytest

from ecgauth.encoder import (
    REPORT_HASH_DIM,
    DualEncoder,
    EncoderConfig,
    build_model,
    encode_report,
    encode_signal,
    encode_signal_batch,
    hash_report,
    hash_reports,
    init_params,
    load_checkpoint,
    load_container,
    project,
    save_checkpoint,
    save_container,
    tokenize_report,
)
from ecgauth.errors import (
    CheckpointChecksumError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    InputError,
    ParameterError,
    ShapeError,
    StateError,
)

SMALL = EncoderConfig(n_blocks=1, channels=(4,), kernel_size=3,
                      embed_dim=8, proj_dim=4)
LEN = 32


def small_params(seed=0):
    return init_params(SMALL, LEN, seed=seed)


# ----------------------------------------------------------------------
# initialization and determinism

def test_init_deterministic_per_seed():
    assert small_params(0).checksum() == small_params(0).checksum()
    assert small_params(0).checksum() != small_params(1).checksum()


def test_params_copy_is_independent():
    mp = small_params()
    cp = mp.copy()
    cp.params["embed.weight"][0, 0] += 1.0
    assert mp.checksum() != cp.checksum()


def test_config_validation():
    with pytest.raises(ParameterError):
        EncoderConfig(n_blocks=2, channels=(8,))
    with pytest.raises(ParameterError):
        EncoderConfig(embed_dim=0)
    with pytest.raises(ParameterError):
        init_params(SMALL, 33, seed=0)  # odd window length
    with pytest.raises(ParameterError):
        init_params(SMALL, 0, seed=0)


# ----------------------------------------------------------------------
# forward properties

def test_zero_input_zero_embedding():
    """At init in eval mode the embedding of a zero window is exactly zero."""
    mp = small_params()
    emb = encode_signal_batch(mp, np.zeros((2, LEN)))
    assert np.array_equal(emb, np.zeros_like(emb))


def test_shape_errors():
    mp = small_params()
    model = build_model(mp)
    with pytest.raises(ShapeError):
        model.forward_signal(mp, np.zeros((2, LEN + 2)), train=False)
    with pytest.raises(ShapeError):
        model.forward_signal(mp, np.zeros(LEN), train=False)


def test_backward_requires_forward():
    mp = small_params()
    model = build_model(mp)
    with pytest.raises(StateError):
        model.backward_signal(mp, np.zeros((2, SMALL.embed_dim)))


def test_single_matches_batch():
    mp = small_params(3)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, LEN))
    batch = encode_signal_batch(mp, x)
    for i in range(5):
        assert np.allclose(encode_signal(mp, x[i]), batch[i], atol=1e-10)


def test_chunked_batch_matches_per_row():
    """Batches larger than the internal chunk stay consistent row-wise."""
    mp = small_params(4)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(300, LEN))  # crosses the 256-window chunk boundary
    batch = encode_signal_batch(mp, x)
    assert batch.shape == (300, SMALL.embed_dim)
    for i in (0, 255, 256, 299):
        assert np.allclose(encode_signal(mp, x[i]), batch[i], atol=1e-10)


def test_projection_is_unit_norm():
    mp = small_params(5)
    rng = np.random.default_rng(2)
    emb = encode_signal_batch(mp, rng.normal(size=(4, LEN)))
    z = project(mp, emb, head="signal")
    assert np.allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)
    zr = project(mp, encode_report(mp, "qrs width 0.08"), head="report")
    assert np.linalg.norm(zr) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InputError):
        project(mp, emb, head="bogus")


# ----------------------------------------------------------------------
# gradient checks (small network, central differences)

def _loss_and_grads_signal(model, mp, x, probe):
    out = model.forward_signal(mp, x, train=True, project=True)
    loss = float((probe * out).sum())
    grads = model.backward_signal(mp, probe)
    return loss, grads


def test_signal_branch_gradients_match_finite_differences():
    mp = small_params(7)
    model = build_model(mp)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, LEN))
    probe = rng.normal(size=(3, SMALL.proj_dim))
    _, grads = _loss_and_grads_signal(model, mp, x, probe)

    h = 1e-5
    for name, tensor in mp.params.items():
        if name not in grads:  # report-branch weights see no signal grad
            continue
        flat = tensor.reshape(-1)
        for idx in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up, _ = _loss_and_grads_signal(model, mp, x, probe)
            flat[idx] = orig - h
            down, _ = _loss_and_grads_signal(model, mp, x, probe)
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            an = grads[name].reshape(-1)[idx]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            # conv biases feeding a batch norm have a true gradient of zero;
            # relative error is meaningless there, so allow a tiny absolute slack
            assert rel <= 1e-4 or abs(an - fd) <= 1e-8, (name, idx, an, fd)


def test_report_branch_gradients_match_finite_differences():
    mp = small_params(8)
    model = build_model(mp)
    rng = np.random.default_rng(4)
    hashed = hash_reports(["rr intervals are 0.8", "qrs width is 0.1",
                           "sdnn is 0.02"])
    probe = rng.normal(size=(3, SMALL.proj_dim))

    def run():
        out = model.forward_report(mp, hashed, train=True, project=True)
        return float((probe * out).sum())

    _ = run()
    grads = model.backward_report(mp, probe)
    h = 1e-5
    worst = 0.0
    for name in ("f_r.linear.weight", "proj_r.fc1.weight", "proj_r.fc2.bias"):
        flat = mp.params[name].reshape(-1)
        for idx in rng.choice(flat.size, size=3, replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            up = run()
            flat[idx] = orig - h
            down = run()
            flat[idx] = orig
            fd = (up - down) / (2 * h)
            an = grads[name].reshape(-1)[idx]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-8))
    assert worst <= 1e-4


# ----------------------------------------------------------------------
# report hashing

def test_tokenize_lowercases_and_splits_punctuation():
    assert tokenize_report("QRS Width is 0.080 seconds.") == [
        "qrs", "width", "is", "0", "080", "seconds"
    ]


def test_hash_report_deterministic_unit_norm():
    v = hash_report("RR Intervals between successive peaks are: 1.000.")
    w = hash_report("RR Intervals between successive peaks are: 1.000.")
    assert np.array_equal(v, w)
    assert v.shape == (REPORT_HASH_DIM,)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(v, hash_report("completely different text"))


def test_hash_report_empty_rejected():
    with pytest.raises(InputError):
        hash_report("")
    with pytest.raises(InputError):
        hash_report("!!! ...")  # no alphanumeric tokens


# ----------------------------------------------------------------------
# checkpoint container

def test_checkpoint_round_trip(tmp_path):
    mp = small_params(9)
    path = tmp_path / "enc.ckpt"
    save_checkpoint(mp, path, metadata={"stage": "pretrain", "seed": 9})
    back = load_checkpoint(path)
    assert back.checksum() == mp.checksum()
    assert back.config == mp.config
    assert back.input_length == mp.input_length


def test_checkpoint_bytes_stable(tmp_path):
    mp = small_params(10)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(mp, a)
    save_checkpoint(mp, b)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_corruption_errors_are_distinct(tmp_path):
    mp = small_params(11)
    path = tmp_path / "enc.ckpt"
    save_checkpoint(mp, path)
    good = path.read_bytes()

    # wrong magic -> version error
    path.write_bytes(b"NOTMAGIC" + good[8:])
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)

    # truncated tail -> truncation error
    path.write_bytes(good[:-40])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(path)

    # flipped tensor byte -> checksum error
    raw = bytearray(good)
    raw[len(raw) - 100] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointChecksumError):
        load_checkpoint(path)

    # trailing junk -> format error
    path.write_bytes(good + b"extra")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_container_kind_mismatch(tmp_path):
    mp = small_params(12)
    path = tmp_path / "thing.bin"
    save_container(path, "registry", mp, extra_tensors={}, metadata={})
    with pytest.raises(CheckpointFormatError):
        load_container(path, expected_kind="encoder")


def test_container_extra_tensors_round_trip(tmp_path):
    mp = small_params(13)
    extra = {"registry.centers": np.arange(12.0).reshape(3, 4)}
    meta = {"ids": [1, 2, 3], "threshold": 0.75}
    path = tmp_path / "reg.bin"
    save_container(path, "registry", mp, extra_tensors=extra, metadata=meta)
    back_mp, back_extra, back_meta = load_container(path, expected_kind="registry")
    assert back_mp.checksum() == mp.checksum()
    assert np.array_equal(back_extra["registry.centers"], extra["registry.centers"])
    assert back_meta == meta
