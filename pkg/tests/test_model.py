import numpy as np
import pytest

from motionsynth import tensor as tz
from motionsynth.features import NormStats
from motionsynth.model import (
    ModelConfig,
    MotionModel,
    local_causal_mask,
    receptive_field_len,
    sinusoidal_encoding,
)
from motionsynth.skeleton import forward_kinematics
from motionsynth.tensor import Tensor
from conftest import make_inputs, tiny_config
from util import assert_grads_close, fd_gradients


# -- receptive field arithmetic ----------------------------------------------

@pytest.mark.parametrize("window,expected", [(8, 87), (4, 39), (12, 135)])
def test_receptive_field_reference_values(window, expected):
    cfg = ModelConfig(window=window)
    assert receptive_field_len(cfg) == expected


def test_local_causal_mask_window_two():
    mask = local_causal_mask(4, 2)
    for i in range(4):
        allowed = set(np.nonzero(mask[i])[0])
        assert allowed == {j for j in (i - 1, i) if j >= 0}


def test_local_causal_mask_wide_window_is_lower_triangular():
    assert np.array_equal(local_causal_mask(5, 9), np.tril(np.ones((5, 5), bool)))


def test_local_causal_mask_window_one_is_identity():
    assert np.array_equal(local_causal_mask(6, 1), np.eye(6, dtype=bool))


# -- stream and model causality ----------------------------------------------

def _final_frame(model, motion, labels, controls):
    out = model.infer(motion, labels, controls)
    return np.concatenate(
        [
            out.motion_mean.data[0, -1],
            out.motion_logstd.data[0, -1],
            out.traj_pos_mean.data[0, -1],
            out.contact_logits.data[0, -1],
        ]
    )


def test_eval_forward_is_deterministic(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=10)
    a = tiny_model.infer(motion, labels, controls)
    b = tiny_model.infer(motion, labels, controls)
    assert np.array_equal(a.motion_mean.data, b.motion_mean.data)
    assert np.array_equal(a.contact_logits.data, b.contact_logits.data)


def test_future_perturbation_never_changes_past(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=12, seed=3)
    base = tiny_model.infer(motion, labels, controls).motion_mean.data.copy()
    for t in (6, 9, 11):
        bumped = motion.copy()
        bumped[0, t] += 1.0
        out = tiny_model.infer(bumped, labels, controls).motion_mean.data
        assert np.array_equal(out[0, :t], base[0, :t])
        assert not np.allclose(out[0, t], base[0, t])


def test_receptive_field_probe_exact_boundary(scheme):
    cfg = tiny_config()
    model = MotionModel(cfg, scheme, rng=np.random.default_rng(1))
    trl = receptive_field_len(cfg)  # 11 for the tiny config
    assert trl == 11
    T = trl + 6
    motion, labels, controls = make_inputs(scheme, 2, T=T, seed=4)
    base = _final_frame(model, motion, labels, controls)
    # inside the receptive field: influence
    bumped = motion.copy()
    bumped[0, T - trl] += 0.5
    assert not np.allclose(_final_frame(model, bumped, labels, controls), base)
    # older than the receptive field: exactly none
    for t in range(0, T - trl):
        bumped = motion.copy()
        bumped[0, t] += 0.5
        news = _final_frame(model, bumped, labels, controls)
        assert np.array_equal(news, base)


def test_window_truncation_leaves_final_output_unchanged(scheme):
    cfg = tiny_config()
    model = MotionModel(cfg, scheme, rng=np.random.default_rng(2))
    trl = receptive_field_len(cfg)
    T = trl + 9
    motion, labels, controls = make_inputs(scheme, 2, T=T, seed=5)
    full = _final_frame(model, motion, labels, controls)
    window = _final_frame(
        model, motion[:, -trl:], labels[:, -trl:], controls[:, -trl:]
    )
    assert np.abs(full - window).max() < 1e-5


def test_sequence_longer_than_positional_table_rejected(scheme):
    cfg = tiny_config(max_positions=16)
    model = MotionModel(cfg, scheme, rng=np.random.default_rng(0))
    motion, labels, controls = make_inputs(scheme, 2, T=20)
    with pytest.raises(ValueError, match="positional"):
        model.infer(motion, labels, controls)


def test_empty_sequence_rejected(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=1)
    with pytest.raises(ValueError, match="time"):
        tiny_model.infer(motion[:, :0], labels[:, :0], controls[:, :0])


# -- fusion, heads, and training-only parts ----------------------------------

def test_fusion_routes_gradient_from_upper_loss_to_lower_stream(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=6, seed=6)
    rng = np.random.default_rng(0)
    out = tiny_model.forward(motion, labels, controls, training=True, rng=rng)
    # a loss read purely from the upper deep stream's slice of the head
    loss = tz.tensor_sum(tz.mul(out.root_slices["up_deep"], out.root_slices["up_deep"]))
    tz.backward(loss)
    grad = tiny_model.params["low_shallow.conv.w"].grad
    assert grad is not None and np.abs(grad).max() > 0


def test_zero_fusion_weights_pass_shallow_features_through(scheme):
    cfg = tiny_config(dropout_input=0.0, dropout_spatial=0.0)
    model = MotionModel(cfg, scheme, rng=np.random.default_rng(3))
    for name in ("fuse.to_upper", "fuse.to_lower"):
        model.params[f"{name}.w"].data[:] = 0.0
        model.params[f"{name}.b"].data[:] = 0.0
    motion, labels, controls = make_inputs(scheme, 2, T=6, seed=7)
    upper, lower = scheme.split(motion, labels)
    z_su = model._stream("up_shallow", Tensor(upper), Tensor(controls), False, None)
    fused = tz.add(
        z_su,
        tz.affine(
            model._stream("low_shallow", Tensor(lower), Tensor(controls), False, None),
            model.params["fuse.to_upper.w"],
            model.params["fuse.to_upper.b"],
        ),
    )
    assert np.array_equal(fused.data, z_su.data)


def test_root_decoder_shapes_and_param_count(tiny_model, scheme):
    cfg = tiny_model.config
    motion, labels, controls = make_inputs(scheme, 2, T=5, seed=8)
    out = tiny_model.forward(motion, labels, controls, training=True, rng=np.random.default_rng(0))
    for key, dec in out.root_decoded.items():
        assert dec.shape == (1, 5, 6)
        assert out.root_slices[key].shape == (1, 5, cfg.d_root)
    h = cfg.d_root
    per_decoder = cfg.d_root * h + h + h * 6 + 6
    rootdec_params = sum(
        p.data.size for n, p in tiny_model.params.items() if n.startswith("rootdec.")
    )
    assert rootdec_params == 2 * per_decoder


def test_root_decoder_refuses_inference_mode(tiny_model):
    with pytest.raises(RuntimeError, match="inference"):
        tiny_model.decode_root_slice("shallow", Tensor(np.zeros((1, 2, 4))), training=False)


def test_inference_forward_never_touches_decoders(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=5, seed=9)
    out = tiny_model.infer(motion, labels, controls)
    assert out.root_slices == {} and out.root_decoded == {}
    deployed = tiny_model.parameter_count(include_training_only=False)
    everything = tiny_model.parameter_count(include_training_only=True)
    assert everything > deployed  # decoders exist but are excluded


def test_zero_aggregation_weights_give_unit_sigma(tiny_model, scheme):
    tiny_model.params["agg.w"].data[:] = 0.0
    tiny_model.params["agg.b"].data[:] = 0.0
    motion, labels, controls = make_inputs(scheme, 2, T=4, seed=10)
    out = tiny_model.infer(motion, labels, controls)
    assert np.allclose(out.motion_mean.data, 0.0)
    assert np.allclose(out.motion_std(), 1.0)


def test_output_lengths_match_input_lengths(tiny_model, scheme):
    motion, labels, controls = make_inputs(scheme, 2, T=9, seed=11)
    out = tiny_model.forward(motion, labels, controls, training=True, rng=np.random.default_rng(1))
    assert out.motion_mean.shape == (1, 9, 276)
    assert out.motion_logstd.shape == (1, 9, 276)
    assert out.traj_pos_mean.shape == (1, 9, 12)
    assert out.traj_dir_logstd.shape == (1, 9, 12)
    assert out.contact_logits.shape == (1, 9, 4)


def test_contact_head_zero_weights_give_even_odds(tiny_model, scheme):
    for name in ("contact.fc1", "contact.fc2"):
        tiny_model.params[f"{name}.w"].data[:] = 0.0
        tiny_model.params[f"{name}.b"].data[:] = 0.0
    motion, labels, controls = make_inputs(scheme, 2, T=4, seed=12)
    out = tiny_model.infer(motion, labels, controls)
    probs = 1.0 / (1.0 + np.exp(-out.contact_logits.data))
    assert np.allclose(probs, 0.5)


def test_default_parameter_count_near_3_5m(scheme):
    model = MotionModel(ModelConfig(), scheme, rng=np.random.default_rng(0))
    count = model.parameter_count(include_training_only=False)
    assert 3.5e6 * 0.85 <= count <= 3.5e6 * 1.15


def test_checkpoint_round_trip_bit_identical(tiny_model, scheme, tmp_path):
    path = tmp_path / "model.ckpt"
    tiny_model.save(path, extra_meta={"note": "test"})
    loaded = MotionModel.load(path, scheme)
    assert loaded.config == tiny_model.config
    motion, labels, controls = make_inputs(scheme, 2, T=6, seed=13)
    a = tiny_model.infer(motion, labels, controls).motion_mean.data
    b = loaded.infer(motion, labels, controls).motion_mean.data
    assert np.array_equal(a, b)


def test_checkpoint_without_config_rejected(scheme, tmp_path):
    path = tmp_path / "weights.ckpt"
    tz.save_checkpoint(path, {"agg.w": np.zeros((2, 2), dtype=np.float32)}, {})
    with pytest.raises(ValueError, match="config"):
        MotionModel.load(path, scheme)


# -- differentiable foot FK ---------------------------------------------------

def _identity_stats():
    z69 = np.zeros(69)
    o69 = np.ones(69)
    z12 = np.zeros(12)
    o12 = np.ones(12)
    return NormStats(
        feature_mean=np.zeros(276), feature_std=np.ones(276),
        skeleton_mean=z69, skeleton_std=o69,
        position_mean=z12, position_std=o12,
        direction_mean=z12, direction_std=o12,
    )


def test_fk_layer_matches_kinematics_oracle(skel, scheme):
    from motionsynth.model import FootKinematics
    from motionsynth import quat
    from motionsynth.features import LAYOUT

    rng = np.random.default_rng(0)
    fk = FootKinematics(skel, LAYOUT, _identity_stats())
    T = 5
    vec = np.zeros((1, T, 276))
    vec[0, :, 3] = 90.0 + rng.normal(0, 2, T)                 # height
    vec[0, :, 4:6] = rng.normal(0, 0.2, (T, 2))               # tilt
    expmaps = rng.normal(0, 0.4, (T, 22, 3))
    vec[0, :, LAYOUT.rotations] = expmaps.reshape(T, -1)
    feet = fk.foot_positions(Tensor(vec)).data[0]             # (T, 4, 3)

    for t in range(T):
        rot = np.zeros((skel.num_joints, 4))
        tilt = np.array([vec[0, t, 4], 0.0, vec[0, t, 5]])
        rot[0] = quat.from_expmap(tilt)
        rot[1:] = quat.from_expmap(expmaps[t])
        root = np.array([0.0, vec[0, t, 3], 0.0])
        oracle = forward_kinematics(skel, rot, root)[list(skel.foot_joint_indices)]
        assert np.abs(feet[t] - oracle).max() < 1e-5


def test_fk_layer_tpose_matches_offsets(skel):
    from motionsynth.model import FootKinematics
    from motionsynth.features import LAYOUT, tpose_positions

    fk = FootKinematics(skel, LAYOUT, _identity_stats())
    vec = np.zeros((1, 1, 276))
    vec[0, 0, 3] = 93.0
    feet = fk.foot_positions(Tensor(vec)).data[0, 0]
    expected = tpose_positions(skel)[list(skel.foot_joint_indices)]
    expected = expected + np.array([0.0, 93.0, 0.0])
    assert np.abs(feet - expected).max() < 1e-9


def test_fk_layer_gradients_finite_difference(skel):
    from motionsynth.model import FootKinematics
    from motionsynth.features import LAYOUT

    rng = np.random.default_rng(1)
    fk = FootKinematics(skel, LAYOUT, _identity_stats())
    vec = np.zeros((1, 2, 276))
    vec[0, :, 3] = 90.0
    vec[0, :, 4:6] = rng.normal(0, 0.2, (2, 2))
    vec[0, :, LAYOUT.rotations] = rng.normal(0, 0.4, (2, 66))
    x = Tensor(vec, requires_grad=True)
    probe = rng.normal(size=(1, 2, 4, 3))

    def loss():
        return tz.tensor_sum(tz.mul(fk.foot_positions(x), Tensor(probe)))

    x.grad = None
    out = loss()
    tz.backward(out)
    analytic = x.grad.copy()
    numeric = fd_gradients(lambda: loss().item(), [x.data], eps=1e-6)[0]
    # only the consumed slices should carry gradient
    assert_grads_close([analytic], [numeric], rtol=1e-4, atol=1e-7)


def test_model_seeded_init_reproducible(scheme):
    a = MotionModel(tiny_config(), scheme, rng=np.random.default_rng(5))
    b = MotionModel(tiny_config(), scheme, rng=np.random.default_rng(5))
    for name, p in a.params.items():
        assert np.array_equal(p.data, b.params[name].data)
