"""Acceptance criteria, each run at its stated tolerance and time budget.

Every test prints a single PASS/FAIL line; the block is repeated in the
terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from sganseg import imaging, synth
from sganseg.metrics import dice, psnr
from sganseg.nn import (
    BatchNorm,
    Conv2d,
    Dense,
    Flatten,
    LeakyReLU,
    MaxPool2d,
    Network,
    PixelShuffle,
    PReLU,
    ResBegin,
    ResEnd,
    Sigmoid,
    checkpoint,
    grad_check,
    inverse_pixel_shuffle,
    load_network,
    pixel_shuffle,
    save_network,
)
from sganseg.segment import FlowGraph, Label, build_trimap, crop_roi, fit_gmm, grabcut, max_flow, segment_lesion
from sganseg.sgan import (
    TrainConfig,
    adversarial_loss,
    build_discriminator,
    build_generator,
    discriminator_preset,
    enhance,
    generator_preset,
    loss_discriminator,
    perceptual_loss,
    train_stage,
)

RNG = np.random.default_rng
pytestmark = pytest.mark.slow


# -- 1: gradient oracle ---------------------------------------------------------


def _isolated_layers():
    rng = RNG(100)
    yield "conv", Network([Conv2d(3, 4, rng=rng)]), (2, 3, 6, 5), 1e-6
    yield "conv stride 2", Network([Conv2d(2, 3, stride=2, rng=rng)]), (2, 2, 7, 6), 1e-6
    yield "dense", Network([Flatten(), Dense(18, 5, rng=rng)]), (3, 2, 3, 3), 1e-6
    yield "batchnorm", Network([BatchNorm(3)]), (4, 3, 3, 3), 1e-4
    yield "prelu", Network([PReLU(3)]), (2, 3, 4, 4), 1e-4
    yield "leaky relu", Network([LeakyReLU(0.2)]), (2, 3, 4, 4), 1e-4
    yield "pixel shuffle", Network([Conv2d(2, 8, rng=rng), PixelShuffle(2)]), (2, 2, 3, 3), 1e-4
    yield "max pool", Network([MaxPool2d()]), (2, 2, 6, 4), 1e-4
    yield "sigmoid", Network([Flatten(), Dense(4, 3, rng=rng), Sigmoid()]), (3, 4, 1, 1), 1e-4
    yield "residual", Network([ResBegin(), Conv2d(2, 2, rng=rng), PReLU(2), ResEnd()]), (2, 2, 4, 4), 1e-4


def _randomised_generator(stage):
    # the identity initialisation zeroes the output conv, which would hide
    # every upstream gradient; check at a generic point instead
    g = build_generator(generator_preset("desk", stage), seed=stage)
    rng = RNG(200 + stage)
    for v in g.param_dict().values():
        if not v.any():
            v[...] = rng.standard_normal(v.shape) * 0.05
    return g


def test_criterion_1_gradient_oracle(verdict):
    t0 = time.perf_counter()
    errors = {}
    for name, net, shape, tol in _isolated_layers():
        x = RNG(1).standard_normal(shape)
        errors[name] = (grad_check(net, x, train=True), tol)
        if any(isinstance(layer, BatchNorm) for layer in net.layers):
            net.forward(RNG(2).standard_normal(shape), train=True)  # running statistics for eval mode
            errors[name + " (eval)"] = (grad_check(net, x, train=False), tol)
    for stage in (1, 2):
        g = _randomised_generator(stage)
        errors[f"desk G{stage}"] = (grad_check(g, RNG(3).standard_normal((2, 1, 8, 8)), max_per_tensor=150), 1e-4)
    # D is piecewise linear up to the sigmoid, so a step that straddles a
    # LeakyReLU kink shows up as error; the chance of that scales with eps
    d = build_discriminator(discriminator_preset("desk"), 32, seed=4)
    errors["desk D"] = (grad_check(d, RNG(5).standard_normal((2, 1, 32, 32)), eps=1e-7, max_per_tensor=200), 1e-4)
    elapsed = time.perf_counter() - t0

    failed = [k for k, (e, tol) in errors.items() if not e < tol]
    worst = max(errors, key=lambda k: errors[k][0] / errors[k][1])
    ok = not failed and elapsed < 120
    verdict(1, "gradient oracle", ok,
            f"{len(errors)} checks, worst {worst} {errors[worst][0]:.2e}, failed {failed}, {elapsed:.1f}s")
    assert ok


# -- 2: min-cut oracle ---------------------------------------------------------


def _exhaustive_min_cut(n, arcs):
    best = math.inf
    for bits in itertools.product((False, True), repeat=n):
        side = list(bits) + [True, False]  # source n, sink n + 1
        best = min(best, sum(c for u, v, c in arcs if side[u] and not side[v]))
    return best


def test_criterion_2_min_cut_oracle(verdict):
    t0 = time.perf_counter()
    rng = RNG(2)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(0, 9))  # at most 10 nodes with the terminals
        arcs = [
            (u, v, int(rng.integers(0, 21)))
            for u in range(n + 2)
            for v in range(n + 2)
            if u != v and u != n + 1 and v != n and rng.random() < 0.45
        ]
        g = FlowGraph(n)
        for u, v, c in arcs:
            g.add_edge(u, v, c)
        flow, _ = max_flow(g)
        mismatches += flow != _exhaustive_min_cut(n, arcs)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 30
    verdict(2, "min-cut oracle", ok, f"200 graphs, {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


# -- 3: EM monotonicity --------------------------------------------------------


def test_criterion_3_em_monotonicity(verdict):
    t0 = time.perf_counter()
    worst_drop = 0.0
    for seed in range(100):
        rng = RNG(3000 + seed)
        dim = 1 if seed % 2 else 3
        k = int(rng.integers(1, 6))
        centres = rng.uniform(-3, 3, (k, dim))
        x = np.concatenate([c + rng.standard_normal((int(rng.integers(10, 80)), dim)) * rng.uniform(0.1, 1.0)
                            for c in centres])
        lls = np.array(fit_gmm(x, k=5, iters=30, seed=seed).log_likelihoods)
        worst_drop = max(worst_drop, float(np.max(lls[:-1] - lls[1:], initial=0.0)))
    elapsed = time.perf_counter() - t0
    ok = worst_drop <= 1e-9 and elapsed < 60
    verdict(3, "EM monotonicity", ok, f"100 datasets, largest decrease {worst_drop:.2e}, {elapsed:.1f}s")
    assert ok


# -- 4: GrabCut phantom floor --------------------------------------------------


def test_criterion_4_grabcut_phantom_floor(verdict):
    t0 = time.perf_counter()
    scores, pin_violations = [], 0
    for i in range(50):
        rng = RNG((4, i))
        spec = synth.PhantomSpec(
            size=96, contrast=rng.uniform(0.3, 0.7), noise_sigma=rng.uniform(0, 12),
            eccentricity=rng.uniform(0, 0.8), lobes=1 + i % 3, category=synth.CATEGORIES[i % 8],
        )
        ph = synth.gen_phantom(spec, (4, i, 1))
        roi, local, (x0, y0) = crop_roi(ph.image, ph.recist)
        tri = build_trimap(roi.shape, local)
        roi_mask = grabcut(roi, tri, seed=i)
        pin_violations += int((~roi_mask[tri == Label.FG]).sum() + roi_mask[tri == Label.BG].sum())
        mask = np.zeros_like(ph.mask)
        mask[y0 : y0 + roi_mask.shape[0], x0 : x0 + roi_mask.shape[1]] = roi_mask
        scores.append(dice(mask, ph.mask))
    elapsed = time.perf_counter() - t0
    mean = float(np.mean(scores))
    ok = mean >= 0.90 and pin_violations == 0 and elapsed < 300
    verdict(4, "GrabCut phantom floor", ok,
            f"mean Dice {mean:.4f} (min {min(scores):.3f}), {pin_violations} pinning violations, {elapsed:.1f}s")
    assert ok


# -- 5 and 6: SGAN learning signal and the stacked-input surrogate ---------------


def _denoise_pairs(n, seed):
    pairs = []
    for i in range(n):
        ph = synth.gen_phantom(synth.PhantomSpec(size=64, category=synth.CATEGORIES[i % 8]), seed=(seed, i))
        sigma = RNG((seed, i, 1)).uniform(10, 30)
        pairs.append(synth.make_denoise_pair(ph.image, sigma, (seed, i, 2)))
    return pairs


@pytest.fixture(scope="module")
def stage_one():
    t0 = time.perf_counter()
    result = train_stage(
        1, _denoise_pairs(200, 51), generator_preset("desk", 1), discriminator_preset("desk"),
        TrainConfig(epochs=5, batch=16, seed=0),
    )
    return result, time.perf_counter() - t0


def test_criterion_5_sgan_learning_signal(verdict, stage_one):
    result, train_time = stage_one
    t0 = time.perf_counter()
    held = _denoise_pairs(50, 52)
    g = result.generator
    improved, gains = 0, []
    for p in held:
        out = g(p.noisy[None, None])[0, 0]
        before = float(np.mean((p.noisy - p.clean) ** 2))
        after = float(np.mean((out - p.clean) ** 2))
        improved += after < before
        gains.append(psnr(out, p.clean) - psnr(p.noisy, p.clean))
    elapsed = train_time + time.perf_counter() - t0
    frac, gain = improved / len(held), float(np.mean(gains))
    ok = frac >= 0.90 and gain >= 1.0 and elapsed < 900
    verdict(5, "SGAN learning signal", ok,
            f"{frac:.0%} of held-out pairs improved, mean PSNR gain {gain:.2f} dB, {elapsed:.1f}s")
    assert ok


def test_criterion_6_stacked_input_surrogate(verdict, stage_one):
    g1_result, train_time = stage_one
    t0 = time.perf_counter()
    enhance_pairs = []
    for i in range(24):
        ph = synth.gen_phantom(synth.PhantomSpec(size=128, category=synth.CATEGORIES[i % 8]), seed=(61, i))
        _, s, sigma_s, kappa = synth.sample_degradation((61, i), ranges=((10, 30), (1, 2), (0, 2), (1, 1.5)))
        enhance_pairs.append(synth.make_enhance_pair(ph.image, s, sigma_s, kappa, (61, i, 1)))
    g2 = train_stage(
        2, enhance_pairs, generator_preset("desk", 2), discriminator_preset("desk"),
        TrainConfig(epochs=1, batch=8, seed=1, d_patch=32),
    ).generator
    g1 = g1_result.generator

    og, sg = [], []
    for i in range(100):
        rng = RNG((62, i))
        spec = synth.PhantomSpec(
            size=96, contrast=rng.uniform(0.2, 0.4), noise_sigma=rng.uniform(20, 40),
            eccentricity=rng.uniform(0, 0.8), lobes=1 + i % 3, category=synth.CATEGORIES[i % 8],
        )
        ph = synth.gen_phantom(spec, (62, i, 1))
        og.append(dice(segment_lesion(ph.image, ph.recist, seed=i), ph.mask))
        sg.append(dice(segment_lesion(enhance(ph.image, g1, g2).stacked, ph.recist, seed=i), ph.mask))
    elapsed = train_time + time.perf_counter() - t0
    og, sg = np.array(og), np.array(sg)
    delta = float(np.mean(sg - og))
    ok = sg.mean() >= og.mean() and delta >= 0 and elapsed < 1200
    verdict(6, "stacked-input surrogate", ok,
            f"OG Dice {og.mean():.4f}, OG+SGAN Dice {sg.mean():.4f}, paired delta {delta:+.4f} "
            f"(better on {np.mean(sg > og):.0%}, worse on {np.mean(sg < og):.0%}), {elapsed:.1f}s")
    assert ok


# -- 7: loss arithmetic --------------------------------------------------------


def test_criterion_7_loss_arithmetic(verdict):
    values = {
        "L_P(0.5, 100, 2)": (perceptual_loss(0.5, 100.0, 2.0), 0.503),
        "L_A(0.5)": (adversarial_loss(np.array([0.5]))[0], 0.693147),
        "L_D(0.9, 0.1)": (loss_discriminator(np.array([0.9]), np.array([0.1]))[0], 0.210721),
    }
    errs = {k: abs(got - want) for k, (got, want) in values.items()}
    ok = max(errs.values()) <= 1e-6
    verdict(7, "loss arithmetic", ok, ", ".join(f"{k}={values[k][0]:.6f}" for k in values))
    assert ok


# -- 8: determinism ------------------------------------------------------------


def _pipeline_bytes():
    spec = synth.PhantomSpec(size=128, noise_sigma=15.0, lobes=2, category="kidney")
    ph = synth.gen_phantom(spec, 81)
    out = {"phantom": ph.image.tobytes() + ph.mask.tobytes() + repr(ph.recist).encode()}
    sigma, s, sigma_s, kappa = synth.sample_degradation(82)
    dp = synth.make_denoise_pair(ph.image, sigma, 83)
    ep = synth.make_enhance_pair(ph.image, s, sigma_s, kappa, 84)
    out["pairs"] = dp.noisy.tobytes() + dp.clean.tobytes() + ep.degraded.tobytes() + ep.clean.tobytes()
    res = train_stage(1, _denoise_pairs(16, 85), generator_preset("desk", 1), discriminator_preset("desk"),
                      TrainConfig(epochs=1, batch=8, seed=86))
    out["training"] = checkpoint.dumps(res.generator) + checkpoint.dumps(res.discriminator) + repr(res.history).encode()
    out["segmentation"] = segment_lesion(ph.image, ph.recist, seed=87).tobytes()
    return out


def test_criterion_8_determinism(verdict):
    first, second = _pipeline_bytes(), _pipeline_bytes()
    differing = [k for k in first if first[k] != second[k]]
    ok = not differing
    verdict(8, "determinism", ok, f"compared {', '.join(first)}; differing: {differing or 'none'}")
    assert ok


# -- 9: round-trips ------------------------------------------------------------


def test_criterion_9_round_trips(verdict, tmp_path):
    rng = RNG(9)
    pgm_err = {}
    for depth in (8, 16):
        img = rng.random((37, 53)).astype(np.float32)
        imaging.save_pgm(img, tmp_path / f"r{depth}.pgm", bit_depth=depth)
        back = imaging.load_pgm(tmp_path / f"r{depth}.pgm")
        pgm_err[depth] = float(np.abs(back.astype(np.float64) - img).max() * (2**depth - 1))
    pgm_ok = all(e <= 0.5 + 1e-6 for e in pgm_err.values())

    shuffle_ok = True
    for r, c, h, w in [(2, 1, 3, 5), (3, 2, 4, 4), (4, 1, 2, 3)]:
        x = rng.standard_normal((2, c * r * r, h, w))
        y = rng.standard_normal((2, c, h * r, w * r))
        shuffle_ok &= np.array_equal(inverse_pixel_shuffle(pixel_shuffle(x, r), r), x)
        shuffle_ok &= np.array_equal(pixel_shuffle(inverse_pixel_shuffle(y, r), r), y)

    net = build_discriminator(discriminator_preset("desk"), 32, seed=9)
    gen = build_generator(generator_preset("desk", 1), seed=9)
    gen.forward(rng.standard_normal((2, 1, 8, 8)).astype(np.float32), train=True)  # populate BN statistics
    ckpt_ok = True
    for i, model in enumerate((net, gen)):
        save_network(model, tmp_path / f"m{i}.ckpt")
        back = load_network(tmp_path / f"m{i}.ckpt")
        ckpt_ok &= checkpoint.dumps(back) == checkpoint.dumps(model)
        ckpt_ok &= all(back.param_dict()[k].tobytes() == v.tobytes() for k, v in model.param_dict().items())

    ok = pgm_ok and bool(shuffle_ok) and bool(ckpt_ok)
    verdict(9, "round-trips", ok,
            f"PGM max error {pgm_err[8]:.3f}/{pgm_err[16]:.3f} steps (8/16 bit), "
            f"pixel shuffle {'exact' if shuffle_ok else 'BROKEN'}, checkpoints {'bit-exact' if ckpt_ok else 'DIFFER'}")
    assert ok
