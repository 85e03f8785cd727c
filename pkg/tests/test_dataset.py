import json

import numpy as np
import pytest

from motionsynth.dataset import (
    CLIP_LEN,
    Manifest,
    MotionDataset,
    Sequence,
    assemble_batch,
    build_clip_index,
    ingest,
    oversample_strides,
)
from motionsynth.synthetic import write_corpus
from motionsynth.training import TrainConfig, lr_for_epoch


def test_oversample_stride_reference_instances():
    # 20 equal types at the base stride
    assert oversample_strides([50] * 20, 4)[0] == 4
    # share 0.1 against uniform 0.05 doubles the stride
    counts = [100] + [900 // 19] * 19
    counts = np.array(counts)
    counts[1] += 1000 - counts.sum()
    strides = oversample_strides(counts, 4)
    assert strides[0] == 8
    # rare type: round(0.2 * 4) = 1
    counts = np.array([10, 495, 495])
    shares = counts / counts.sum()
    assert shares[0] == pytest.approx(0.01, abs=1e-9)
    assert oversample_strides(counts, 4)[0] == 1


def test_oversample_empty_dataset_rejected():
    with pytest.raises(ValueError, match="no frames"):
        oversample_strides([0, 0], 4)


def _fake_dataset(lengths_types, num_types=3):
    sequences = []
    for n, tid in lengths_types:
        sequences.append(
            Sequence(
                features=np.zeros((n, 276)),
                labels=np.zeros((n, 4)),
                controls=np.zeros((n, 69 + 6 * num_types + 24)),
                type_ids=np.full(n, tid, dtype=np.int64),
                path=f"seq{len(sequences)}",
            )
        )
    return MotionDataset(sequences, stats=None, types=[f"t{i}" for i in range(num_types)])


def test_build_clip_index_window_arithmetic():
    ds = _fake_dataset([(1000, 0)], num_types=1)
    windows = build_clip_index(ds, [4], clip_len=300)
    assert len(windows) == 176
    starts = [w.start for w in windows]
    assert starts[0] == 0 and starts[-1] == 700
    assert all(b - a == 4 for a, b in zip(starts, starts[1:]))


def test_build_clip_index_skips_short_sequences():
    ds = _fake_dataset([(299, 0), (300, 0)], num_types=1)
    with pytest.warns(UserWarning, match="skipped"):
        windows = build_clip_index(ds, [4], clip_len=300)
    assert len(windows) == 1
    assert windows[0].sequence == 1


def test_clip_windows_never_cross_sequence_bounds():
    ds = _fake_dataset([(512, 0), (731, 1), (300, 2)])
    windows = build_clip_index(ds, [1, 2, 3], clip_len=300)
    for w in windows:
        assert w.start + 300 <= len(ds.sequences[w.sequence])


def test_realized_clip_shares_balance_6_3_1_corpus():
    # 30000 frames split 0.6/0.3/0.1 across types, sequence lengths chosen
    # the way a curator would: many medium walks, a few runs, long idles
    lengths = [(2000, 0)] * 9 + [(4500, 1), (4500, 1)] + [(1000, 2)] * 3
    ds = _fake_dataset(lengths)
    counts = ds.type_frame_counts()
    assert counts.tolist() == [18000, 9000, 3000]
    strides = oversample_strides(counts, 4)
    assert strides.tolist() == [7, 4, 1]
    windows = build_clip_index(ds, strides, clip_len=300)
    per_type = np.bincount([w.type_id for w in windows], minlength=3)
    shares = per_type / per_type.sum()
    assert np.all(np.abs(shares - 1 / 3) <= 1 / 30), shares


def test_lr_schedule_reference_points():
    cfg = TrainConfig()
    assert lr_for_epoch(cfg, 1) == pytest.approx(1e-4)
    assert lr_for_epoch(cfg, 500) == pytest.approx(1e-4)
    assert lr_for_epoch(cfg, 501) == pytest.approx(5e-5)
    assert lr_for_epoch(cfg, 1001) == pytest.approx(2.5e-5)


@pytest.fixture(scope="module")
def small_cache(tmp_path_factory, scheme):
    root = tmp_path_factory.mktemp("corpus")
    manifest_path = write_corpus(root, [("walk", 400), ("idle", 340)])
    manifest = Manifest.load(manifest_path)
    return ingest(manifest, root / "cache")


def test_ingest_builds_consistent_cache(small_cache, tmp_path):
    ds = small_cache
    assert ds.num_types == 2
    assert len(ds.sequences) == 2
    for seq in ds.sequences:
        assert seq.features.shape[1] == 276
        assert seq.labels.shape[1] == 4
        assert len(seq) == seq.controls.shape[0] == seq.type_ids.shape[0]
    normalized = ds.stats.normalize_features(np.concatenate([s.features for s in ds.sequences]))
    assert abs(normalized.mean()) < 1e-6
    # one-hot block untouched by normalization
    raw = ds.sequences[0].controls
    norm = ds.normalize_control_matrix(raw)
    k = 6 * ds.num_types
    assert np.array_equal(norm[:, 69:69 + k], raw[:, 69:69 + k])


def test_cache_round_trip(small_cache, tmp_path_factory, scheme):
    root = tmp_path_factory.mktemp("corpus2")
    manifest_path = write_corpus(root, [("walk", 400)])
    ds = ingest(Manifest.load(manifest_path), root / "cache")
    reopened = MotionDataset.open(root / "cache")
    assert reopened.types == ds.types
    for a, b in zip(ds.sequences, reopened.sequences):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.controls, b.controls)
    assert np.allclose(reopened.stats.feature_mean, ds.stats.feature_mean)


def test_assemble_batch_alignment_and_noise(small_cache, scheme):
    ds = small_cache
    windows = build_clip_index(ds, [1] * ds.num_types, clip_len=60)
    rng = np.random.default_rng(0)
    batch = assemble_batch(ds, windows[:2], scheme, rng, noise_std=0.0, clip_len=60)
    assert batch.motion_in.shape == (2, 59, 276)
    seq = ds.sequences[windows[0].sequence]
    start = windows[0].start
    expected_target = ds.stats.normalize_features(seq.features[start + 1:start + 60])
    assert np.allclose(batch.motion_target[0], expected_target)
    # inputs shifted one frame earlier than targets
    expected_input = ds.stats.normalize_features(seq.features[start:start + 59])
    assert np.allclose(batch.motion_in[0], expected_input)

    noisy = assemble_batch(ds, windows[:2], scheme, np.random.default_rng(1),
                           noise_std=0.05, clip_len=60)
    delta = noisy.motion_in - batch.motion_in
    assert abs(delta.std() - 0.05) < 0.002
    assert abs(delta.mean()) < 0.002
    # noise never touches controls, labels, or targets
    assert np.array_equal(noisy.controls_in, batch.controls_in)
    assert np.array_equal(noisy.labels_in, batch.labels_in)
    assert np.array_equal(noisy.motion_target, batch.motion_target)


def test_augment_statistics_million_draws(small_cache, scheme):
    ds = small_cache
    windows = build_clip_index(ds, [1] * ds.num_types, clip_len=40)
    rng = np.random.default_rng(2)
    sel = windows[:1] * 100  # ~1e6 noise draws over repeats
    clean = assemble_batch(ds, sel, scheme, None, 0.0, clip_len=40)
    noisy = assemble_batch(ds, sel, scheme, rng, 0.05, clip_len=40)
    delta = (noisy.motion_in - clean.motion_in).ravel()
    assert delta.size > 1e6
    assert abs(delta.mean()) < 0.05 * 0.01
    assert abs(delta.std() - 0.05) < 0.05 * 0.01


def test_feet_target_matches_feature_slices(small_cache, scheme):
    ds = small_cache
    windows = build_clip_index(ds, [1] * ds.num_types, clip_len=40)
    batch = assemble_batch(ds, windows[:1], scheme, clip_len=40)
    seq = ds.sequences[windows[0].sequence]
    start = windows[0].start
    lay = scheme.layout
    from motionsynth.skeleton import canonical_skeleton

    feet = canonical_skeleton().foot_joint_indices
    for fi, j in enumerate(feet):
        sl = lay.position_of(j)
        assert np.array_equal(batch.feet_target[0, :, fi], seq.features[start + 1:start + 40, sl])
