"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 format, 5 config.  Failures print one
line ``sganseg: error code=<n> kind=<kind>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets, imaging, metrics, synth
from .config import RunConfig, load_config
from .errors import ConfigError, FormatError, ParameterError, ShapeError, UninitializedStatsError
from .nn import load_network, save_network
from .segment import GrabCutParams, segment_lesion
from .sgan import (
    FeatureExtractor,
    LossWeights,
    TrainConfig,
    discriminator_preset,
    enhance,
    generator_preset,
    train_stage,
    write_history_csv,
)

log = logging.getLogger("sganseg")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_CONFIG = 0, 2, 3, 4, 5
THREADS_ENV = "SGANSEG_THREADS"


class UsageError(Exception):
    pass


def _threads(args, cfg: RunConfig) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return cfg.threads


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {p}")
    return p


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _echo_config(cfg: RunConfig, path: Path) -> None:
    imaging.write_bytes_atomic(path, cfg.dumps().encode())


def _seed(*parts) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(p) for p in parts])


# ---------------------------------------------------------------------------
# subcommands


def cmd_phantom(args, cfg: RunConfig) -> None:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.category is not None and args.category not in synth.CATEGORIES:
        raise UsageError(f"--category must be one of {', '.join(synth.CATEGORIES)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def make(i: int):
        rng = np.random.default_rng(_seed(cfg.seed, i, 0))
        spec = synth.PhantomSpec(
            size=cfg.phantom_size,
            eccentricity=float(rng.uniform(0.0, 0.8)),
            contrast=float(rng.uniform(cfg.contrast_min, cfg.contrast_max)),
            texture_sigma=cfg.texture_sigma,
            noise_sigma=float(rng.uniform(cfg.noise_min, cfg.noise_max)),
            category=args.category or synth.CATEGORIES[i % len(synth.CATEGORIES)],
            lobes=int(rng.integers(1, 4)),
        )
        return f"ph{i:05d}", synth.gen_phantom(spec, _seed(cfg.seed, i, 1))

    datasets.write_phantom_set(_map(make, range(args.n), args.threads_resolved), out)
    _echo_config(cfg, out / "config.txt")
    log.info("wrote %d phantoms to %s", args.n, out)


def cmd_synth(args, cfg: RunConfig) -> None:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    sources = datasets.source_images(_require_dir(args.src, "source"))
    if not sources:
        raise FileNotFoundError(f"no .pgm files in {args.src}")
    images = [imaging.load_pgm(p) for p in sources]
    ranges = ((cfg.sigma_min, cfg.sigma_max), (cfg.s_min, cfg.s_max),
              (cfg.blur_min, cfg.blur_max), (cfg.kappa_min, cfg.kappa_max))
    pairs = []
    for i in range(args.n):
        k = i % len(images)
        sigma, s, sigma_s, kappa = synth.sample_degradation(_seed(cfg.seed, i, 0), ranges)
        if args.stage == 1:
            pair = synth.make_denoise_pair(images[k], sigma, _seed(cfg.seed, i, 1))
        else:
            pair = synth.make_enhance_pair(images[k], s, sigma_s, kappa, _seed(cfg.seed, i, 1))
        pairs.append((f"pair{i:05d}", sources[k].stem, pair))
    out = Path(args.out)
    datasets.write_pair_set(pairs, out)
    _echo_config(cfg, out / "config.txt")
    log.info("wrote %d stage-%d pairs to %s", args.n, args.stage, out)


def cmd_train(args, cfg: RunConfig) -> None:
    stage, _, x, y = datasets.read_pair_set(_require_dir(args.pairs, "pair"))
    if stage != args.stage:
        raise ConfigError(f"--stage {args.stage} but {args.pairs} holds stage-{stage} pairs")
    cascade = None
    if args.g1 is not None:
        cascade = load_network(_require_file(args.g1, "stage-1 checkpoint"))
    elif cfg.cascade and stage == 2:
        raise ConfigError("cascade = true needs --g1")
    gen = load_network(_require_file(args.init_g, "generator checkpoint")) if args.init_g else None
    disc = load_network(_require_file(args.init_d, "discriminator checkpoint")) if args.init_d else None
    tcfg = TrainConfig(
        epochs=cfg.epochs, batch=cfg.batch, lr=cfg.lr, beta1=cfg.beta1, seed=cfg.seed,
        weights=LossWeights(cfg.w_vgg, cfg.w_adv, cfg.vgg_reduce),
    )
    result = train_stage(
        stage, (x, y), generator_preset(cfg.preset, stage), discriminator_preset(cfg.preset), tcfg,
        feat=FeatureExtractor(), generator=gen, discriminator=disc, cascade=cascade,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_network(result.generator, out)
    save_network(result.discriminator, out.with_name(out.name + ".disc"))
    write_history_csv(result.history, out.with_name(out.name + ".loss.csv"))
    _echo_config(cfg, out.with_name(out.name + ".config.txt"))
    log.info("trained stage %d for %d steps -> %s", stage, len(result.history), out)


def cmd_enhance(args, cfg: RunConfig) -> None:
    inputs = datasets.source_images(_require_dir(args.inp, "input"))
    g1 = load_network(_require_file(args.g1, "stage-1 checkpoint"))
    g2 = load_network(_require_file(args.g2, "stage-2 checkpoint"))
    out = Path(args.out)
    for sub in ("denoised", "enhanced", "stacked"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    def run(path: Path) -> None:
        res = enhance(imaging.load_pgm(path), g1, g2)
        imaging.save_pgm(imaging.clamp01(res.denoised), out / "denoised" / path.name, bit_depth=16)
        imaging.save_pgm(imaging.clamp01(res.enhanced), out / "enhanced" / path.name, bit_depth=16)
        datasets.save_stacked(res.stacked, out / "stacked" / path.name)

    # networks cache activations, so images are processed one at a time
    for p in inputs:
        run(p)
    _echo_config(cfg, out / "config.txt")
    log.info("enhanced %d images into %s", len(inputs), out)


def _image_path(directory: Path, id_: str) -> Path:
    for cand in (directory / f"{id_}.pgm", directory / "images" / f"{id_}.pgm"):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"no image for id {id_!r} under {directory}")


def cmd_segment(args, cfg: RunConfig) -> None:
    src = _require_dir(args.inp, "input")
    anns = datasets.read_annotations(_require_file(args.ann, "annotation CSV"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = GrabCutParams(k=cfg.gmm_k, gamma=cfg.gamma, max_iters=cfg.max_iters, gmm_iters=cfg.gmm_iters)

    def run(item):
        i, ann = item
        path = _image_path(src, ann.id)
        img = imaging.load_pgm(path) if args.channels == 1 else datasets.load_stacked(path, args.channels)
        mask = segment_lesion(img, ann.recist, params, _seed(cfg.seed, i),
                              cfg.fg_dilation, cfg.inner_scale, cfg.outer_scale)
        datasets.save_mask(mask, out / f"{ann.id}.pgm")

    _map(run, list(enumerate(anns)), args.threads_resolved)
    _echo_config(cfg, out / "config.txt")
    log.info("segmented %d lesions into %s", len(anns), out)


def _mask_path(directory: Path, id_: str) -> Path:
    for cand in (directory / f"{id_}.pgm", directory / "masks" / f"{id_}.pgm"):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"no mask for id {id_!r} under {directory}")


def cmd_eval(args, cfg: RunConfig) -> None:
    pred_dir = _require_dir(args.pred, "prediction")
    gt_dir = _require_dir(args.gt, "ground-truth")
    anns = datasets.read_annotations(_require_file(args.ann, "annotation CSV"))
    results = []
    for ann in anns:
        pred = datasets.load_mask(_mask_path(pred_dir, ann.id))
        gt = datasets.load_mask(_mask_path(gt_dir, ann.id))
        if pred.shape != gt.shape:
            raise FormatError(f"mask size mismatch for {ann.id}: {pred.shape} vs {gt.shape}")
        results.append(metrics.score(ann.id, ann.category, pred, gt))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metrics.write_results(results, out)
    rows = metrics.aggregate(results, args.group)
    metrics.write_aggregate(rows, out.with_name(out.stem + "_aggregate.csv"))
    _echo_config(cfg, out.with_name(out.stem + "_config.txt"))
    overall = rows[-1]
    log.info("dice %.3f +- %.3f over %d lesions", overall.mean["dice"], overall.std["dice"], overall.n)


def cmd_report(args, cfg: RunConfig) -> None:
    runs = {}
    for spec in args.runs:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--runs entries must be NAME=CSV, got {spec!r}")
        if name in runs:
            raise UsageError(f"duplicate run name {name!r}")
        runs[name] = metrics.read_results(_require_file(path, "results CSV"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    cmp = metrics.compare_pipelines(runs)
    metrics.write_comparison(cmp, out)
    for row in cmp.rows:
        log.info("%s/%s dice %.3f (paired delta %+.4f)", row["input"], row["segmenter"],
                 row["dice_mean"], row["paired_dice_delta"])


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sganseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a phantom lesion dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--category")
    p.add_argument("--size", type=int, dest="phantom_size")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("synth", parents=[common], help="synthesize training pairs")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train one enhancement stage")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--g1", help="frozen stage-1 generator; stage-2 inputs pass through it")
    p.add_argument("--init-g", help="continue training this generator")
    p.add_argument("--init-d", help="continue training this discriminator")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="denoise and enhance images")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("segment", parents=[common], help="GrabCut lesion segmentation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", parents=[common], help="score predicted masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--group", choices=("all", "category"), default="all")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="compare result sets")
    p.add_argument("--runs", nargs="+", required=True, metavar="NAME=CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


_KINDS = {EXIT_USAGE: "usage", EXIT_IO: "io", EXIT_FORMAT: "format", EXIT_CONFIG: "config"}


def _fail(code: int, exc) -> int:
    msg = " ".join(str(exc).split())
    print(f"sganseg: error code={code} kind={_KINDS[code]}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(_require_file(args.config, "config file")) if args.config else RunConfig()
        overrides = {"seed": args.seed}
        for key in ("phantom_size", "preset", "epochs"):
            overrides[key] = getattr(args, key, None)
        cfg = cfg.updated(**overrides)
        args.threads_resolved = _threads(args, cfg)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        args.func(args, cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except (ConfigError, ParameterError, ShapeError, UninitializedStatsError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except FormatError as exc:
        return _fail(EXIT_FORMAT, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
