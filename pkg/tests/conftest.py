import numpy as np
import pytest
import torch

from dcfuse import datasynth, imagio

# single-threaded keeps results bit-identical across runs and machines
torch.set_num_threads(1)


@pytest.fixture(scope="session")
def phantom():
    return datasynth.vessel_phantom(96, 12)


@pytest.fixture(scope="session")
def sample64():
    """One synthesized 64x64 two-focus sample with moderate blur."""
    gt = datasynth.vessel_phantom(64, 5)
    fpm = datasynth.random_fpm(64, 64, 21)
    return datasynth.synthesize_pair(gt, fpm, 3.0, seed=21)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Eight 32x32 samples from two small sources; id s000004 lands in the
    validation split."""
    root = tmp_path_factory.mktemp("tinyset")
    src = root / "src"
    src.mkdir()
    for i in range(2):
        imagio.save_image(datasynth.vessel_phantom(96, 30 + i),
                          str(src / f"src{i}.png"), 16)
    return datasynth.build_dataset(str(src), str(root / "data"),
                                   tile=64, crop=32, count=8, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
