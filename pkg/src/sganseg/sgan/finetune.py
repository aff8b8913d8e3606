"""Iterative fine-tuning on self-selected real images."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import imaging, synth
from .inference import finetune_select
from .models import DiscriminatorConfig, GeneratorConfig
from .training import TrainConfig, TrainResult, train_stage

log = logging.getLogger(__name__)


@dataclass
class FinetuneResult:
    stage1: TrainResult
    stage2: TrainResult
    selected: list[list[int]] = field(default_factory=list)  # candidate indices picked per round


def _pairs(pool: Sequence[np.ndarray], n: int, stage: int, seed) -> list:
    patch = synth.DENOISE_PATCH if stage == 1 else synth.ENHANCE_PATCH
    usable = [im for im in pool if min(im.shape) >= patch]
    if not usable:
        return []
    seeds = imaging.seed_sequence(seed).spawn(n)
    out = []
    for i, ss in enumerate(seeds):
        src = usable[i % len(usable)]
        draw_seed, pair_seed = ss.spawn(2)
        sigma, s, sigma_s, kappa = synth.sample_degradation(draw_seed)
        if stage == 1:
            out.append(synth.make_denoise_pair(src, sigma, pair_seed))
        else:
            out.append(synth.make_enhance_pair(src, s, sigma_s, kappa, pair_seed))
    return out


def finetune(
    stage1: TrainResult,
    stage2: TrainResult,
    corpus: Sequence[np.ndarray],
    candidates: Sequence[np.ndarray],
    g_cfgs: tuple[GeneratorConfig, GeneratorConfig],
    d_cfgs: tuple[DiscriminatorConfig, DiscriminatorConfig],
    cfg: TrainConfig = TrainConfig(epochs=1),
    rounds: int = 3,
    max_n: int = 1000,
    pairs_per_round: int = 64,
    lam: float = 1.0,
) -> FinetuneResult:
    """Grow the training pool with candidates the current models visibly improve.

    Each round scores the remaining candidates, adds the selected ones to the
    source pool, synthesizes fresh pairs for both stages and continues
    training the existing networks.  Stops after ``rounds`` rounds or as soon
    as a round selects nothing.
    """
    pool = [imaging.as_gray(im) for im in corpus]
    remaining = list(range(len(candidates)))
    result = FinetuneResult(stage1, stage2)
    seeds = imaging.seed_sequence(cfg.seed).spawn(rounds)
    for r in range(rounds):
        g1, g2 = result.stage1.generator, result.stage2.generator
        picked_local = finetune_select([candidates[i] for i in remaining], g1, g2, max_n, lam)
        picked = [remaining[i] for i in picked_local]
        result.selected.append(picked)
        log.info("fine-tune round %d: %d candidate(s) selected", r + 1, len(picked))
        if not picked:
            break
        pool += [imaging.as_gray(candidates[i]) for i in picked]
        remaining = [i for i in remaining if i not in set(picked)]
        s1, s2, t1, t2 = seeds[r].spawn(4)
        for stage, pair_seed, train_seed in ((1, s1, t1), (2, s2, t2)):
            pairs = _pairs(pool, pairs_per_round, stage, pair_seed)
            if not pairs:
                continue
            prev = result.stage1 if stage == 1 else result.stage2
            trained = train_stage(
                stage,
                pairs,
                g_cfgs[stage - 1],
                d_cfgs[stage - 1],
                replace(cfg, seed=int(train_seed.generate_state(1)[0])),
                generator=prev.generator,
                discriminator=prev.discriminator,
            )
            merged = TrainResult(trained.generator, trained.discriminator, prev.history + trained.history)
            if stage == 1:
                result.stage1 = merged
            else:
                result.stage2 = merged
    return result
