import numpy as np
import pytest

from motionsynth.features import PartitionScheme, control_dim
from motionsynth.model import ModelConfig, MotionModel
from motionsynth.skeleton import canonical_skeleton


@pytest.fixture(scope="session")
def skel():
    return canonical_skeleton()


@pytest.fixture(scope="session")
def scheme(skel):
    return PartitionScheme(skel)


def tiny_config(**overrides):
    base = dict(
        d_model=16,
        n_heads=2,
        layers_per_stream=2,
        window=3,
        d_root=4,
        d_ff=16,
        num_types=2,
        contact_hidden=8,
        max_positions=128,
        dtype="float64",
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture()
def tiny_model(scheme):
    return MotionModel(tiny_config(), scheme, rng=np.random.default_rng(0))


def make_inputs(scheme, num_types, B=1, T=8, seed=0):
    rng = np.random.default_rng(seed)
    motion = rng.normal(0, 0.5, size=(B, T, 276))
    labels = (rng.random((B, T, 4)) < 0.5).astype(float)
    controls = rng.normal(0, 0.5, size=(B, T, control_dim(num_types)))
    return motion, labels, controls
