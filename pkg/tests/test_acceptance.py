"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass line
per criterion. Dataset-conditional criteria skip unless the cathode
dataset is supplied via MICROGEN_CATHODE_DATA; the cross-implementation
parity criteria skip unless the trainer's fixture bundle has been
exported (see trainer/README.md).
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from microgen import gan
from microgen.cli import main as cli_main
from microgen.metrics import (interface_face_count, tpb_edge_count, tpcf,
                              tpb_density, volume_fraction, volume_fractions)
from microgen.nn.weights import read_mgw1, write_mgw1
from microgen.transport import solve_diffusion
from microgen.voxel import SubvolumeSpec, decode, iter_subvolumes, tile
from microgen.volio import read_mgv1

from conftest import random_grid
from gradcheck import (check_activation_gradients, check_batchnorm_gradients,
                       check_conv_gradients, fd_gradient, rel_err)
from oracles import (brute_interface_faces, brute_tpb_edges, brute_tpcf,
                     brute_volume_fraction, direct_solve_d_rel)

REPO_ROOT = Path(__file__).resolve().parents[1]
TRAINER_BUNDLE = REPO_ROOT / "trainer" / "fixtures" / "bundle"


def ok(message: str) -> None:
    print(f"\n[PASS] {message}")


def test_shape_audit(fullscale_gan):
    start = time.perf_counter()
    disc, gen = fullscale_gan
    assert gen.out_spatial((1, 1, 1)) == (64, 64, 64)
    assert gen.in_channels == 100 and gen.out_channels == 3
    assert disc.out_spatial((64, 64, 64)) == (1, 1, 1)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    ok(f"shape audit: 100x1^3 -> 3x64^3 and 3x64^3 -> 1, exact "
       f"({elapsed * 1e3:.1f} ms)")


def test_lambda_scaling_and_linear_cost(fullscale_gan):
    _, gen = fullscale_gan
    gan.generate(gen, gan.sample_latent(0, 1))   # warm-up
    edges = {}
    times = []
    voxels = []
    for alpha in (1, 2, 3, 4):
        z = gan.sample_latent(alpha, alpha)
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            oh = gan.generate(gen, z)
            best = min(best, time.perf_counter() - t0)
        edge = oh.values.shape[1]
        assert oh.values.shape[1:] == (edge,) * 3
        edges[alpha] = edge
        times.append(best)
        voxels.append(edge ** 3)
    assert edges == {1: 64, 2: 80, 3: 96, 4: 112}
    x = np.asarray(voxels, dtype=float)
    y = np.asarray(times)
    slope, intercept = np.polyfit(x, y, 1)
    r2 = 1.0 - np.sum((y - (slope * x + intercept)) ** 2) \
        / np.sum((y - y.mean()) ** 2)
    assert r2 > 0.95
    ok(f"lambda scaling: edges {sorted(edges.values())}, "
       f"time-vs-voxels R^2 = {r2:.4f}")


def test_periodic_generation(fullscale_gan):
    _, gen = fullscale_gan
    worst = 0.0
    for alpha, axis in ((1, 0), (2, 2)):
        z = gan.sample_latent(10 + alpha, alpha)
        base = gan.generate_periodic(gen, z)
        reps = [1, 1, 1]
        reps[axis] = 2
        out = gan.generate_periodic(gen, np.tile(z, (1,) + tuple(reps)))
        expected = np.tile(base.values, (1,) + tuple(reps))
        worst = max(worst, float(np.abs(out.values - expected).max()))
    assert worst < 1e-5

    grid = decode(gan.generate_periodic(gen, gan.sample_latent(21, 1)))
    tiled = tile(grid, (2, 2, 2))
    assert tpb_edge_count(tiled, "periodic") == \
        8 * tpb_edge_count(grid, "periodic")
    assert tpb_density(tiled, "periodic") == tpb_density(grid, "periodic")
    for p in range(3):
        assert interface_face_count(tiled, p, "periodic") == \
            8 * interface_face_count(grid, p, "periodic")
    ok(f"periodicity: tiling equivariance (max err {worst:.2e}) and "
       f"periodic SSA/TPB counts match on 2^3 tiling")


def test_metric_oracles():
    for seed in range(100):
        size = 6 + seed % 3
        grid = random_grid(seed, size=size)
        fractions = volume_fractions(grid)
        assert abs(fractions.sum() - 1.0) < 1e-12
        for p in range(3):
            assert volume_fraction(grid, p) == \
                brute_volume_fraction(grid.labels, p)
        for boundary, periodic in (("truncated", False), ("periodic", True)):
            for p in range(3):
                assert interface_face_count(grid, p, boundary) == \
                    brute_interface_faces(grid.labels, p, periodic)
            assert tpb_edge_count(grid, boundary) == \
                brute_tpb_edges(grid.labels, periodic)
        curve = tpcf(grid, seed % 3, "xyz"[seed % 3], 4,
                     boundary="periodic" if seed % 2 else "truncated")
        expected = brute_tpcf(grid.labels, seed % 3, "xyz"[seed % 3], 4,
                              periodic=bool(seed % 2))
        np.testing.assert_allclose(curve.values, expected, rtol=0, atol=1e-12)
    ok("metric oracles: volume fraction, SSA, TPB, TPCF match exhaustive "
       "scans on 100 random grids")


def test_transport_analytics(fullscale_gan):
    from microgen import VoxelGrid

    dense = VoxelGrid(np.zeros((8, 8, 8), dtype=np.uint8), 100.0, 2)
    result, _ = solve_diffusion(dense, 0, "z")
    assert abs(result.d_rel - 1.0) < 1e-6

    labels = np.ones((4, 4, 8), dtype=np.uint8)
    labels[1:3, 1:3, :] = 0
    channel = VoxelGrid(labels, 100.0, 2)
    phi = volume_fraction(channel, 0)
    result, _ = solve_diffusion(channel, 0, "z", tol=1e-8)
    assert abs(result.d_rel - phi) < 1e-3
    assert abs(result.tortuosity - 1.0) < 1e-3

    blocked = np.zeros((4, 4, 4), dtype=np.uint8)
    blocked[:, :, 2] = 1
    result, _ = solve_diffusion(VoxelGrid(blocked, 100.0, 2), 0, "z")
    assert result.d_rel < 1e-9

    checked = 0
    for seed in range(40):
        rng = np.random.default_rng(2000 + seed)
        mask = (rng.random((6, 6, 6)) > 0.5).astype(np.uint8)
        grid = VoxelGrid(mask, 100.0, 2)
        expected = direct_solve_d_rel(grid.labels, 0, "z")
        got, _ = solve_diffusion(grid, 0, "z", tol=1e-10, max_iter=200000)
        assert abs(got.d_rel - expected) <= 1e-6
        checked += 1
        if checked >= 10:
            break

    # Fig. 8 construction: on a periodically generated volume, periodic
    # lateral boundaries can only open transport paths
    _, gen = fullscale_gan
    grid = decode(gan.generate_periodic(gen, gan.sample_latent(31, 1)))
    compared = 0
    for phase in range(3):
        rm, _ = solve_diffusion(grid, phase, "z", "mirror", tol=1e-9,
                                max_iter=200000)
        rp, _ = solve_diffusion(grid, phase, "z", "periodic", tol=1e-9,
                                max_iter=200000)
        f_dense = grid.dims[0] * grid.dims[1] / grid.dims[2]
        assert rp.d_rel * f_dense >= rm.d_rel * f_dense - 1e-9
        compared += 1
    assert compared == 3
    ok("transport analytics: dense cube, straight channel, non-percolating "
       "sentinel, direct-solve oracle, periodic >= mirror flux")


def test_loss_identities():
    half = np.array([0.5])
    j_half = gan.discriminator_loss(half, half, 0.0)
    assert abs(j_half - (-1.3863)) < 1e-4

    g_half = gan.generator_loss(half, "non_saturating")
    assert abs(g_half - 0.6931) < 1e-4

    # hand substitution of the smoothed objective at
    # (d_real, d_fake, eps) = (0.9, 0.1, 0.1); its 4-decimal value is
    # -0.4304 (the coarser reference -0.4303 comes from truncating
    # ln 0.9 at 4 digits)
    expected = 0.9 * math.log(0.9) + 0.1 * math.log(0.1) + math.log(0.9)
    smoothed = gan.discriminator_loss(np.array([0.9]), np.array([0.1]), 0.1)
    assert abs(smoothed - expected) < 1e-4
    assert abs(expected - (-0.4304)) < 1e-4
    ok(f"loss identities: J_D(0.5,0.5)={j_half:.4f}, "
       f"J_G(0.5)={g_half:.4f}, smoothed={smoothed:.4f}")


def test_gradient_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(777)
    worst = 0.0
    for _ in range(20):
        worst = max(worst, check_conv_gradients(rng, transposed=False))
        worst = max(worst, check_conv_gradients(rng, transposed=True))
        worst = max(worst, check_batchnorm_gradients(rng))
        for kind in ("relu", "leaky_relu", "sigmoid", "softmax"):
            worst = max(worst, check_activation_gradients(rng, kind))
        # both losses (gradients of the descent losses)
        d_real = rng.uniform(0.15, 0.85, size=5)
        d_fake = rng.uniform(0.15, 0.85, size=5)
        g_real, g_fake = gan.discriminator_loss_grads(d_real, d_fake, 0.1)
        loss = lambda: -gan.discriminator_loss(d_real, d_fake, 0.1)
        worst = max(worst, rel_err(g_real, fd_gradient(loss, d_real)))
        worst = max(worst, rel_err(g_fake, fd_gradient(loss, d_fake)))
        for mode in ("non_saturating", "saturating"):
            analytic = gan.generator_loss_grad(d_fake, mode)
            fd = fd_gradient(lambda: gan.generator_loss(d_fake, mode), d_fake)
            worst = max(worst, rel_err(analytic, fd))
    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 300
    ok(f"gradient suite: 20 configs per layer/loss, worst rel err "
       f"{worst:.2e} in {elapsed:.1f} s")


def test_toy_training(toy_training):
    start = time.perf_counter()
    generator, _, dataset, result, config = toy_training
    assert result.g_updates == config.update_ratio * result.d_updates
    assert result.d_updates == 500
    train_mean = np.mean([oh.values.reshape(3, -1).mean(axis=1)
                          for oh in dataset], axis=0)
    phis = []
    for i in range(8):
        z = gan.sample_latent(1000 + i, 1, channels=generator.in_channels)
        grid = decode(gan.generate(generator, z))
        counts = np.bincount(grid.flat_labels(), minlength=3)
        phis.append(counts / grid.voxel_count)
    gen_mean = np.mean(phis, axis=0)
    err = np.abs(gen_mean - train_mean).max()
    assert err <= 0.10
    elapsed = time.perf_counter() - start
    assert elapsed < 1800
    ok(f"toy training: 500 cycles, k=2 counters exact, "
       f"max phase-fraction error {err:.3f}")


CATHODE_ENV = "MICROGEN_CATHODE_DATA"


@pytest.mark.skipif(CATHODE_ENV not in os.environ,
                    reason=f"set {CATHODE_ENV} to the cathode MGV1 file "
                           "(see scripts/fetch_datasets.py)")
def test_cathode_dataset_pipeline(tmp_path):
    grid = read_mgv1(os.environ[CATHODE_ENV])
    spec = SubvolumeSpec(size=64, stride=8)

    out = tmp_path / "subs"
    assert cli_main(["sample", os.environ[CATHODE_ENV], "--size", "64",
                     "--stride", "8", "--out", str(out)]) == 0
    n_files = len(list(out.glob("*.mgv")))
    assert n_files == 13824

    rng = np.random.default_rng(0)
    subs = list(iter_subvolumes(grid, spec))
    picks = rng.choice(len(subs), size=100, replace=False)
    phis, tpbs, drels = [], [], []
    for i in picks:
        sub = subs[int(i)]
        phis.append(volume_fraction(sub, 0))
        tpbs.append(tpb_density(sub, "truncated"))
        res, _ = solve_diffusion(sub, 0, "z", tol=1e-5)
        drels.append(res.d_rel)
    assert abs(np.mean(phis) - 0.50) <= 0.06
    assert abs(np.mean(tpbs) - 0.43) <= 0.04
    assert abs(np.mean(drels) - 0.26) <= 0.07
    ok("cathode dataset: 13824 sub-volumes and reference statistics")


needs_bundle = pytest.mark.skipif(
    not (TRAINER_BUNDLE / "weights.mgw").exists(),
    reason="trainer fixture bundle not exported yet "
           "(python -m microgen_trainer.export_fixture)")


@needs_bundle
def test_parity_with_trainer_bundle():
    weights = TRAINER_BUNDLE / "weights.mgw"
    z = np.fromfile(TRAINER_BUNDLE / "z.f32", dtype="<f4")
    expected = np.fromfile(TRAINER_BUNDLE / "expected_output.f32", dtype="<f4")

    generator = gan.load_generator(weights)
    alpha = round((z.size / generator.in_channels) ** (1 / 3))
    z = z.reshape(generator.in_channels, alpha, alpha, alpha)
    got = gan.generate(generator, z).values.astype(np.float32)
    expected = expected.reshape(got.shape)
    err = float(np.abs(got - expected).max())
    assert err < 1e-4

    # byte-identical MGW1 round trip through the primary implementation
    records = read_mgw1(weights)
    rewritten = TRAINER_BUNDLE.parent / "_roundtrip.mgw"
    try:
        write_mgw1(rewritten, records)
        assert rewritten.read_bytes() == weights.read_bytes()
    finally:
        rewritten.unlink(missing_ok=True)
    ok(f"trainer parity: forward max err {err:.2e}, MGW1 round trip "
       f"byte-identical")


@needs_bundle
@pytest.mark.skipif(CATHODE_ENV not in os.environ,
                    reason=f"needs both the trainer bundle and {CATHODE_ENV}")
def test_cathode_trained_bundle_statistics():
    weights = TRAINER_BUNDLE / "weights.mgw"
    meta_path = TRAINER_BUNDLE / "training_meta.json"
    if not meta_path.exists():
        pytest.skip("bundle was notcathode-trained")
    import json
    meta = json.loads(meta_path.read_text())
    if meta.get("dataset") != "cathode":
        pytest.skip("bundle was not cathode-trained")
    generator = gan.load_generator(weights)
    _, stats = gan.evaluate_samples(generator, 100, seed=0)
    bands = {0: (0.49, 0.01), 1: (0.41, 0.01), 2: (0.102, 0.003)}
    for phase, (mean, std) in bands.items():
        got = stats[f"phi_{phase}"][0]
        assert abs(got - mean) <= 2 * std
    ok("cathode-trained bundle lands inside 2x generated-row bands")
