"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Fixtures are pinned (corpus seed, loss-network seed, learning rate, batch
size, iteration counts) so every run reproduces the same numbers.
"""

import time

import cv2
import numpy as np
import pytest
from skimage.metrics import structural_similarity

from dfcdit import archive, autodiff as ad, lossnet as ln, pipelines as pl, transformnets as tn
from dfcdit.baselines import decolorize_baseline, downscale_baseline, ssim
from dfcdit.config import TaskConfig
from dfcdit.imageio import (_rle_component, float_to_rgbe, from_tensor, load_hdr, load_image, luminance,
                            save_image, to_tensor)
from dfcdit.synthetic import isoluminant_probe, synthetic_corpus, synthetic_hdr

from conftest import FIXTURE_BATCH, FIXTURE_ITERATIONS, FIXTURE_LR, FIXTURE_SEED
from gradsuite import CASES, MAX_REL, TYPICAL_REL
from oracles import perceptual_loss_loops

DOWNSCALE_TAPS = ("conv1_1", "conv2_1", "conv3_1")


def _downscale_config():
    return TaskConfig(learning_rate=FIXTURE_LR, batch_size=FIXTURE_BATCH, iterations=FIXTURE_ITERATIONS,
                      train_size=64, seed=FIXTURE_SEED, taps=DOWNSCALE_TAPS)


@pytest.fixture(scope="module")
def downscale_run(corpus, narrow_lossnet):
    t0 = time.perf_counter()
    net, report = pl.train_downscaler(corpus, _downscale_config(), narrow_lossnet)
    return net, report, time.perf_counter() - t0


# ---------------------------------------------------------------------------

def test_c01_loss_oracle_equivalence(criterion):
    with criterion(1, "perceptual loss vs nested-loop oracle") as c:
        # unit-scale first layer, as in converted pretrained weights
        net = ln.random_lossnet("tiny", widths=(4, 4), seed=11, input_scale=1 / 255)
        rng = np.random.default_rng(2024)
        taps = ["conv1_1", "conv2_1"]
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(100):
            x = rng.uniform(0, 255, (1, 3, 8, 8)).astype(np.float32)
            y = rng.uniform(0, 255, (1, 3, 8, 8)).astype(np.float32)
            worst = max(worst, abs(ln.perceptual_loss(net, x, y, taps) - perceptual_loss_loops(net, x, y, taps)))
        elapsed = time.perf_counter() - t0
        c.check(worst <= 1e-5, f"max abs err {worst:.2e} over 100 pairs")
        c.check(elapsed < 10, f"{elapsed:.1f}s")


def test_c02_gradient_suite(criterion):
    with criterion(2, "finite-difference gradient suite") as c:
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        bad = []
        worst = (0.0, 0.0)
        for name, case in CASES.items():
            m, t = case(rng)
            worst = (max(worst[0], m), max(worst[1], t))
            if not (m < MAX_REL and t < TYPICAL_REL):
                bad.append(f"{name} ({m:.1e}/{t:.1e})")
        elapsed = time.perf_counter() - t0
        c.check(not bad, f"{len(CASES)} cases, worst max-rel {worst[0]:.1e}, typical {worst[1]:.1e}"
                + (f", failing: {', '.join(bad)}" if bad else ""))
        c.check(elapsed < 60, f"{elapsed:.1f}s")


def test_c03_architecture_contracts(criterion):
    with criterion(3, "architecture contracts") as c:
        down = tn.build_net("downscale", seed=0)
        shape = tn.forward(down, np.random.default_rng(0).uniform(0, 255, (1, 3, 256, 256))).shape
        c.check(shape == (1, 3, 64, 64), f"downscale 3x256x256 -> {shape[1:]}")
        gray = tn.build_net("decolorize", seed=0)
        shape = tn.forward(gray, np.zeros((1, 3, 37, 23))).shape
        c.check(shape == (1, 1, 37, 23), f"decolorize 3x37x23 -> {shape[1:]}")
        tone = tn.build_net("tonemap", seed=0)
        x = np.logspace(-5, 5, 3 * 32 * 32).reshape(1, 3, 32, 32).astype(np.float32)
        out = tn.forward(tone, x)
        c.check(out.shape == x.shape and out.min() >= 0 and out.max() <= 255,
                f"tonemap on 1e-5..1e5 input -> [{out.min():.3g}, {out.max():.3g}]")


def test_c04_shape_parity_identities(criterion):
    with criterion(4, "shape-parity identities") as c:
        rng = np.random.default_rng(4)
        x = (rng.standard_normal((2, 3, 5, 7)) * 10.0 ** rng.integers(-6, 6, (2, 3, 5, 7))).astype(np.float32)
        g = ad.Graph()
        up = g.nn_upsample(g.constant(x), 4).value
        blocks = up.reshape(2, 3, 5, 4, 7, 4)
        c.check(up.shape == (2, 3, 20, 28), f"upsampled shape {up.shape}")
        c.check(bool((blocks == x[:, :, :, None, :, None]).all()), "4x4 blocks constant")
        c.check(bool((up[:, :, ::4, ::4] == x).all()), "top-left recovery exact")
        gray = x[:, :1]
        rep = g.replicate3(g.constant(gray)).value
        same = rep[:, 0].tobytes() == rep[:, 1].tobytes() == rep[:, 2].tobytes() == gray[:, 0].tobytes()
        c.check(same, "replicate3 channels bitwise equal")


def test_c05_downscale_training(criterion, downscale_run, corpus, narrow_lossnet):
    with criterion(5, "desk-scale downscale training") as c:
        net, report, elapsed = downscale_run
        c.check(report.iterations == 200, f"{report.iterations} iterations")
        c.check(report.final_loss <= 0.5 * report.initial_loss,
                f"loss {report.initial_loss:.1f} -> {report.final_loss:.1f}")
        trained = ad.nn_upsample(tn.forward(net, corpus), 4)
        bicubic = np.stack([downscale_baseline(im.transpose(1, 2, 0), "bicubic", 4).transpose(2, 0, 1) for im in corpus])
        bicubic = ad.nn_upsample(bicubic.astype(np.float32), 4)
        l_net = ln.perceptual_loss(narrow_lossnet, corpus, trained, DOWNSCALE_TAPS)
        l_bic = ln.perceptual_loss(narrow_lossnet, corpus, bicubic, DOWNSCALE_TAPS)
        c.check(l_net < l_bic, f"trained {l_net:.1f} < bicubic {l_bic:.1f}")
        c.check(elapsed < 15 * 60, f"{elapsed:.1f}s")


def test_c06_isoluminant_contrast(criterion, corpus, narrow_lossnet):
    with criterion(6, "iso-luminant contrast") as c:
        cfg = TaskConfig(learning_rate=FIXTURE_LR, batch_size=FIXTURE_BATCH, iterations=100, train_size=64,
                         seed=FIXTURE_SEED, taps=("conv4_1",))
        net, _ = pl.train_decolorizer(corpus, cfg, narrow_lossnet)
        probe = isoluminant_probe(64)
        half = probe.shape[1] // 2
        base = decolorize_baseline(probe).astype(int)
        c.check(bool((base[:, :half] - base[:, half:] == 0).all()), "baseline difference exactly 0")
        out = pl.apply(net, probe).astype(float)
        diff = abs(out[:, :half].mean() - out[:, half:].mean())
        c.check(diff >= 2, f"network halves differ by {diff:.1f} gray levels")


def test_c07_online_tonemapping(criterion, narrow_lossnet):
    with criterion(7, "online HDR tone mapping") as c:
        hdr = synthetic_hdr(128, 1e4, seed=0)
        gray_patch = (slice(40, 72), slice(40, 72))
        hdr[gray_patch] = luminance(hdr[gray_patch])[..., None]  # achromatic pixels
        lum = luminance(hdr)
        dr = lum.max() / lum[lum > 0].min()
        c.check(dr >= 1e4, f"dynamic range {dr:.3g}")
        cfg = TaskConfig(learning_rate=FIXTURE_LR, tonemap_steps=100, seed=FIXTURE_SEED)
        t0 = time.perf_counter()
        ldr, report, net = pl.tonemap_online(hdr, cfg, narrow_lossnet)
        elapsed = time.perf_counter() - t0
        c.check(ldr.dtype == np.uint8 and ldr.shape == (128, 128, 3), f"output {ldr.shape} {ldr.dtype}")
        c.check(report.final_loss < report.initial_loss, f"loss {report.initial_loss:.1f} -> {report.final_loss:.1f}")
        z, _ = pl.rescale_for_loss(pl.log_compress(hdr, cfg.alpha, cfg.eps_log))
        y = tn.forward(net, to_tensor(z))[0].transpose(1, 2, 0)
        l_out = np.clip(luminance(y), 0, 255)[gray_patch]
        err = np.abs(ldr[gray_patch].astype(float) - l_out[..., None]).max()
        c.check(err <= 0.5 + 1e-9, f"achromatic |C_out - L_out| <= {err:.3f}")
        c.check(elapsed < 600, f"{elapsed:.1f}s")


def _mixed_hdr_bytes(hdr):
    """Radiance file whose first half of scanlines is adaptive RLE and second half flat.

    The classic reference reader switches to flat decoding for the rest of
    the file at the first flat scanline, so RLE rows must come first.
    """
    h, w = hdr.shape[:2]
    rgbe = float_to_rgbe(hdr)
    parts = [b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n", f"-Y {h} +X {w}\n".encode()]
    for y in range(h):
        if y >= h // 2:
            parts.append(rgbe[y].tobytes())
        else:
            parts.append(bytes((2, 2, w >> 8, w & 0xFF)))
            parts.extend(_rle_component(rgbe[y, :, ch].tobytes()) for ch in range(4))
    return b"".join(parts)


def test_c08_format_fidelity(criterion, tmp_path, narrow_lossnet):
    with criterion(8, "format fidelity") as c:
        rng = np.random.default_rng(8)
        hdr = (rng.uniform(0, 3, (24, 48, 3)) ** 5).astype(np.float32)
        hdr[:, 10:30] = hdr[:, 10:11]
        path = tmp_path / "mixed.hdr"
        path.write_bytes(_mixed_hdr_bytes(hdr))
        ours = load_hdr(path)
        ref = cv2.imread(str(path), cv2.IMREAD_ANYDEPTH | cv2.IMREAD_ANYCOLOR)[:, :, ::-1]
        _, e = np.frexp(ref.astype(np.float64).max(axis=-1, keepdims=True))
        quanta = np.abs(ours - ref) / np.ldexp(1.0, e - 8)
        c.check(ours.shape == ref.shape and quanta.max() <= 1.0, f"RGBE vs reference decoder: {quanta.max():.3f} quanta")

        img = rng.integers(0, 256, (17, 23, 3), dtype=np.uint8)
        for suffix in (".png", ".ppm"):
            save_image(img, tmp_path / f"rt{suffix}")
            c.check(load_image(tmp_path / f"rt{suffix}").tobytes() == img.tobytes(), f"{suffix} round-trip bitwise")

        a = tmp_path / "w.dfcw"
        ln.save_weights(narrow_lossnet, a)
        ln.save_weights(ln.load_weights(a), tmp_path / "w2.dfcw")
        header, tensors = archive.load(a)
        same = all(tensors[k].tobytes() == v.tobytes() for k, v in narrow_lossnet.params.items())
        c.check(same and a.read_bytes() == (tmp_path / "w2.dfcw").read_bytes(), "weight archive round-trip bitwise")


def test_c09_metric_sanity(criterion):
    with criterion(9, "SSIM sanity") as c:
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 255, (48, 48))
        c.check(ssim(x, x) == 1.0, "ssim(x, x) == 1.0")
        worst = 0.0
        for _ in range(20):
            h, w = rng.integers(11, 80, 2)
            a = rng.uniform(0, 255, (h, w))
            b = np.clip(a + rng.normal(0, rng.uniform(1, 60), (h, w)), 0, 255)
            ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                        data_range=255)
            worst = max(worst, abs(ssim(a, b) - ref))
        c.check(worst < 1e-4, f"max |ssim - reference| {worst:.1e} over 20 pairs")


def test_c10_determinism(criterion, downscale_run, corpus, narrow_lossnet):
    with criterion(10, "determinism of the criterion 5 run") as c:
        _, first, _ = downscale_run
        _, second = pl.train_downscaler(corpus, _downscale_config(), narrow_lossnet)
        c.check(first.losses == second.losses, f"{len(first.losses)} losses identical")
        c.check(first.checksum == second.checksum, "final weights identical")
