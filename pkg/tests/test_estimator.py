import numpy as np
import pytest

from helpers import check_gradients

from sepqe.audio import AudioSignal, SeparationTriplet
from sepqe.autodiff import Tensor
from sepqe.dataset import BuildConfig, build_corpus
from sepqe.encoder import extract
from sepqe.errors import DataError, FormatError, NumericsError
from sepqe.estimator import (EstimatorConfig, LabelNormalizer, _encoder_view,
                             _wrap_params, batch_loss, fit, forward,
                             infer_outputs, init_model, load, predict,
                             predict_from_features, save, training_loss)
from sepqe.features import FeatureSequence
from sepqe.manifest import split_entries

TINY = dict(feature_dim=8, heads=2, frame_len=32, hop=16, batch_size=2,
            warmup_steps=2, total_steps=10)


def tiny_model(mode="sisnr", seed=0, **overrides):
    cfg = EstimatorConfig(metric_mode=mode, seed=seed, **{**TINY, **overrides})
    return init_model(cfg)


def rand_feats(rng, t=5, d=8):
    return FeatureSequence(rng.standard_normal((t, d)))


# --- config ---------------------------------------------------------------------

def test_config_head_divisibility():
    with pytest.raises(DataError):
        EstimatorConfig(feature_dim=5, heads=4)


def test_config_mode_and_warmup_checks():
    with pytest.raises(DataError):
        EstimatorConfig(metric_mode="pesq")
    with pytest.raises(DataError):
        EstimatorConfig(warmup_steps=10, total_steps=10)


def test_output_arity():
    assert EstimatorConfig(metric_mode="sisnr").n_out == 3
    assert EstimatorConfig(metric_mode="wer").n_out == 3
    assert EstimatorConfig(metric_mode="joint").n_out == 6


# --- normalizer -----------------------------------------------------------------

def test_normalizer_round_trip():
    rng = np.random.default_rng(0)
    labels = rng.uniform(-5, 20, size=(40, 6))
    norm = LabelNormalizer.fit(labels, tuple("abcdef"))
    z = norm.normalize(labels)
    assert z.min() >= 0.0 and z.max() <= 1.0
    assert np.max(np.abs(norm.denormalize(z) - labels)) < 1e-12


def test_normalizer_rejects_constant_output():
    labels = np.zeros((10, 3))
    labels[:, 0] = np.linspace(0, 1, 10)
    with pytest.raises(DataError, match="constant"):
        LabelNormalizer.fit(labels, ("a", "b", "c"))


# --- forward --------------------------------------------------------------------

def test_forward_single_frame_pooling_is_identity():
    model = tiny_model()
    rng = np.random.default_rng(1)
    feats = [rand_feats(rng, t=1) for _ in range(3)]
    out = forward(model, *feats)
    # Recompute by hand: with T=1, pooling passes the transformed frame through.
    from sepqe.transformer import transformer_layer

    ptensors = _wrap_params(model.params)
    x = Tensor(np.concatenate([f.data for f in feats], axis=1))
    h = transformer_layer(x, ptensors, model.config.heads)
    manual = h.data[0] @ model.params["head.w"] + model.params["head.b"]
    assert np.allclose(out, manual, atol=1e-12)


def test_forward_frame_duplication_invariance():
    model = tiny_model()
    rng = np.random.default_rng(2)
    feats = [rand_feats(rng, t=4) for _ in range(3)]
    doubled = [FeatureSequence(np.concatenate([f.data, f.data])) for f in feats]
    assert np.allclose(forward(model, *feats), forward(model, *doubled), atol=1e-9)


def test_forward_output_shapes():
    rng = np.random.default_rng(3)
    feats = [rand_feats(rng) for _ in range(3)]
    assert forward(tiny_model("sisnr"), *feats).shape == (3,)
    assert forward(tiny_model("joint"), *feats).shape == (6,)


def test_forward_shape_mismatch():
    model = tiny_model()
    rng = np.random.default_rng(4)
    with pytest.raises(DataError):
        forward(model, rand_feats(rng, t=5), rand_feats(rng, t=4), rand_feats(rng, t=5))


def test_forward_swapped_estimates_change_outputs():
    model = tiny_model(seed=11)
    rng = np.random.default_rng(5)
    f = [rand_feats(rng) for _ in range(3)]
    a = forward(model, f[0], f[1], f[2])
    b = forward(model, f[0], f[2], f[1])
    assert not np.allclose(a, b)


def test_forward_deterministic():
    model = tiny_model(seed=12)
    rng = np.random.default_rng(6)
    f = [rand_feats(rng) for _ in range(3)]
    assert np.array_equal(forward(model, *f), forward(model, *f))


# --- training loss ---------------------------------------------------------------

def test_training_loss_identity_zero():
    out = np.array([1.0, 2.0, 3.0])
    assert training_loss(out, out.copy(), None, "sisnr") == 0.0


def test_training_loss_joint_normalizes():
    norm = LabelNormalizer(lo=np.zeros(6), hi=np.full(6, 2.0))
    labels = np.zeros(6)  # at dataset min -> normalized targets all 0
    out = np.zeros(6)
    assert training_loss(out, labels, norm, "joint") == 0.0


def test_training_loss_hand_case():
    out = np.array([0.5, 0.5, 0.5])
    target = np.array([0.0, 1.0, 0.5])
    assert training_loss(out, target, None, "wer") == pytest.approx((0.25 + 0.25 + 0.0) / 3)


def test_training_loss_joint_requires_normalizer():
    with pytest.raises(DataError):
        training_loss(np.zeros(6), np.zeros(6), None, "joint")


# --- fit on a tiny corpus ----------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    cfg = BuildConfig(n_train=8, n_valid=4, n_test=4, duration_s=0.25, seed=3)
    entries = build_corpus(cfg, root)
    return root, entries


def fit_config(mode="joint", **overrides):
    base = dict(metric_mode=mode, feature_dim=8, heads=2, frame_len=64, hop=32,
                batch_size=4, warmup_steps=5, total_steps=30, seed=5,
                peak_lr_scratch=3e-3, peak_lr_encoder=3e-4)
    base.update(overrides)
    return EstimatorConfig(**base)


def test_fit_loss_decreases(tiny_corpus):
    root, entries = tiny_corpus
    model, log = fit(fit_config(), split_entries(entries, "train"),
                     split_entries(entries, "valid"), root)
    assert len(log.step_losses) == 30
    assert log.step_losses[-1] < log.step_losses[0]
    assert log.best_step > 0


def test_fit_deterministic(tiny_corpus):
    root, entries = tiny_corpus
    train, valid = split_entries(entries, "train"), split_entries(entries, "valid")
    _, log_a = fit(fit_config(), train, valid, root)
    _, log_b = fit(fit_config(), train, valid, root)
    assert log_a.step_losses == log_b.step_losses
    assert log_a.validations == log_b.validations


def test_fit_frozen_encoder_params_bit_identical(tiny_corpus):
    root, entries = tiny_corpus
    cfg = fit_config(encoder_trainable=False)
    reference = init_model(cfg).params
    model, log = fit(cfg, split_entries(entries, "train"),
                     split_entries(entries, "valid"), root)
    assert not log.encoder_group_active
    for key in ("enc.projection", "enc.bias"):
        assert np.array_equal(model.params[key], reference[key])
    # Scratch params must still have moved.
    assert not np.array_equal(model.params["head.w"], reference["head.w"])


def test_fit_trainable_encoder_moves(tiny_corpus):
    root, entries = tiny_corpus
    cfg = fit_config()
    reference = init_model(cfg).params
    model, _ = fit(cfg, split_entries(entries, "train"),
                   split_entries(entries, "valid"), root)
    assert not np.array_equal(model.params["enc.projection"], reference["enc.projection"])


def test_fit_rejects_empty_or_small(tiny_corpus):
    root, entries = tiny_corpus
    with pytest.raises(DataError):
        fit(fit_config(), [], split_entries(entries, "valid"), root)
    with pytest.raises(DataError, match="batch_size"):
        fit(fit_config(batch_size=64), split_entries(entries, "train"),
            split_entries(entries, "valid"), root)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_nan_loss_aborts(tiny_corpus):
    root, entries = tiny_corpus
    # One warmup step at an absurd rate overflows the attention scores.
    cfg = fit_config(peak_lr_scratch=1e160, peak_lr_encoder=1e160, warmup_steps=1)
    with pytest.raises(NumericsError, match="step"):
        fit(cfg, split_entries(entries, "train"), split_entries(entries, "valid"), root)


def test_end_to_end_gradient_extract_forward_loss():
    rng = np.random.default_rng(9)
    cfg = EstimatorConfig(metric_mode="sisnr", feature_dim=4, heads=2, frame_len=16,
                          hop=8, warmup_steps=1, total_steps=2, batch_size=1, seed=2)
    model = init_model(cfg)
    trainable = set(model.params)
    sig = AudioSignal(rng.standard_normal(24) * 0.4, 16000)
    target = np.array([1.0, -1.0, 0.5])
    from sepqe.encoder import frame_samples

    frames = frame_samples(sig.samples, cfg.frame_len, cfg.hop)
    tensors = None

    def fn():
        nonlocal tensors
        if tensors is None:
            tensors = _wrap_params(model.params, trainable)
        return batch_loss(tensors, cfg, [([frames] * 3, target)], None)

    tensors = _wrap_params(model.params, trainable)
    check_gradients(fn, tensors)


# --- predict ------------------------------------------------------------------------

def test_predict_mode_contract(tiny_corpus):
    root, entries = tiny_corpus
    model, _ = fit(fit_config("sisnr"), split_entries(entries, "train"),
                   split_entries(entries, "valid"), root)
    from sepqe.wavio import read_wav

    entry = entries[0]
    triplet = SeparationTriplet(
        mixture=read_wav(root / entry.audio["mixture"]),
        estimates=(read_wav(root / entry.audio["est1"]),
                   read_wav(root / entry.audio["est2"])))
    labels = predict(model, triplet)
    assert labels.sisnr_s1 is not None
    assert labels.sisnr_avg is not None
    assert labels.wer_s1 is None and labels.wer_avg is None


def test_predict_denormalize_round_trip():
    norm = LabelNormalizer(lo=np.array([0.0, -10.0]), hi=np.array([1.0, 30.0]))
    x = np.array([0.25, 12.0])
    assert np.max(np.abs(norm.denormalize(norm.normalize(x)) - x)) < 1e-12


def test_infer_outputs_matches_predict(tiny_corpus):
    root, entries = tiny_corpus
    model, _ = fit(fit_config("sisnr"), split_entries(entries, "train"),
                   split_entries(entries, "valid"), root)
    test = split_entries(entries, "test")
    outs = infer_outputs(model, test, root)
    enc = _encoder_view(model)
    from sepqe.wavio import read_wav

    entry = test[0]
    feats = [extract(read_wav(root / entry.audio[k]), enc)
             for k in ("mixture", "est1", "est2")]
    single = predict_from_features(model, *feats)
    assert np.allclose(outs[0], [single.sisnr_s1, single.sisnr_s2, single.sisnr_avg],
                       atol=1e-9)


# --- checkpoints ----------------------------------------------------------------------

def test_save_load_round_trip_bit_exact(tmp_path, tiny_corpus):
    root, entries = tiny_corpus
    model, _ = fit(fit_config("joint"), split_entries(entries, "train"),
                   split_entries(entries, "valid"), root)
    path = tmp_path / "model.rfqc"
    save(model, path)
    back = load(path)
    assert back.config == model.config
    for key in model.params:
        assert np.array_equal(back.params[key], model.params[key])
    rng = np.random.default_rng(10)
    feats = [rand_feats(rng) for _ in range(3)]
    a = predict_from_features(model, *feats)
    b = predict_from_features(back, *feats)
    assert a.to_dict() == b.to_dict()


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "model.rfqc"
    path.write_bytes(b"JUNKxxxxxxxxxxxxxxxx")
    with pytest.raises(FormatError, match="magic"):
        load(path)


def test_load_rejects_unknown_version(tmp_path):
    import struct

    path = tmp_path / "model.rfqc"
    path.write_bytes(struct.pack("<4sII", b"RFQC", 99, 0))
    with pytest.raises(FormatError, match="version"):
        load(path)


def test_load_rejects_truncated_payload(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.rfqc"
    save(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 16])
    with pytest.raises(FormatError, match="truncated"):
        load(path)


def test_joint_checkpoint_requires_normalizer(tmp_path):
    model = tiny_model("joint")
    with pytest.raises(DataError, match="normalizer"):
        save(model, tmp_path / "model.rfqc")
