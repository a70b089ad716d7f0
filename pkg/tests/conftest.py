import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from microgen import VoxelGrid, gan

DATA_DIR = Path(__file__).parent / "data"


def random_grid(seed: int, size: int = 6, phases: int = 3,
                spacing_nm: float = 250.0) -> VoxelGrid:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, phases, size=(size, size, size)).astype(np.uint8)
    return VoxelGrid(labels, spacing_nm=spacing_nm, phase_count=phases)


@pytest.fixture(scope="session")
def fullscale_gan():
    """Randomly initialized full-scale generator + discriminator."""
    return (gan.build_discriminator(seed=1), gan.build_generator(seed=0))


@pytest.fixture(scope="session")
def fullscale_weights_file(tmp_path_factory, fullscale_gan):
    """Random-init MGW1 bundle of the full-scale nets for CLI and format tests."""
    disc, gen = fullscale_gan
    path = tmp_path_factory.mktemp("weights") / "fullscale_random.mgw"
    gan.save_gan(path, disc, gen)
    return path


@pytest.fixture(scope="session")
def toy_weights_file(tmp_path_factory):
    """Small untrained toy GAN bundle for fast CLI round trips."""
    gen = gan.build_net(gan.toy_generator_table(12, 3), seed=0)
    disc = gan.build_net(gan.toy_discriminator_table(3), seed=1)
    path = tmp_path_factory.mktemp("toy") / "toy.mgw"
    gan.save_gan(path, disc, gen)
    return path


@pytest.fixture(scope="session")
def toy_training():
    """One full toy training run (stripe dataset), shared across tests.

    Returns (generator, discriminator, dataset, result, config).
    """
    dataset = gan.make_stripe_dataset(64, seed=0)
    config = gan.TrainConfig(lr=2e-3, batch_size=16, max_cycles=500, seed=0)
    generator = gan.build_net(gan.toy_generator_table(12, 3), seed=0)
    discriminator = gan.build_net(gan.toy_discriminator_table(3), seed=1)
    result = gan.train(dataset, config, generator, discriminator)
    return generator, discriminator, dataset, result, config
