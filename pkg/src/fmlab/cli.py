"""Command-line orchestration of training, synthesis policies, and evaluation.

Subcommands: train, synthesize-indomain, synthesize-crossdomain, inject,
split, evaluate, propagate, stats. Configs are plain key=value text files;
the FMLAB_SEED environment variable overrides any configured seed. Exit
codes: 0 success, 2 config/data error, 3 evaluation mismatch.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import masks as mask_ops
from . import metrics, rasters, toys
from .errors import DomainError, ShapeError
from .manifest import ManifestRecord, read_manifest, write_manifest
from .neural import (
    CLASS_CONDITIONAL,
    MASK_CONDITIONAL,
    TrainConfig,
    VelocityModel,
    load_checkpoint,
    save_checkpoint,
    train_fm,
    train_rf_injector,
)
from .sampler import IntegratorConfig, integrate, integrate_from_background
from .schedules import linear_schedule, rectified_schedule

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EVAL = 3


# -- config files --------------------------------------------------------------


def parse_config(path) -> dict[str, str]:
    """key=value lines; '#' starts a comment; later keys override earlier."""
    cfg: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def effective_seed(cfg_seed: int) -> int:
    env = os.environ.get("FMLAB_SEED")
    return int(env) if env else cfg_seed


# -- checkpoint metadata sidecar ------------------------------------------------


def _write_meta(path, model: VelocityModel, extra: dict[str, str]) -> None:
    meta = {
        "mode": model.mode,
        "data_dim": str(model.data_dim),
        "width": str(model.width),
        "hidden_layers": str(model.hidden_layers),
        "time_embed_dim": str(model.time_embed_dim),
        "num_classes": str(model.num_classes),
    }
    if model.mask_shape is not None:
        meta["mask_height"] = str(model.mask_shape[0])
        meta["mask_width"] = str(model.mask_shape[1])
    meta.update(extra)
    with open(path, "w", encoding="ascii") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")


def load_model(checkpoint_path, use_ema: bool = True) -> tuple[VelocityModel, dict[str, str]]:
    """Rebuild a model from a checkpoint and its .meta sidecar."""
    meta_path = str(checkpoint_path) + ".meta"
    if not os.path.exists(meta_path):
        raise DomainError(f"missing checkpoint metadata {meta_path}")
    meta = parse_config(meta_path)
    mask_shape = None
    if "mask_height" in meta:
        mask_shape = (int(meta["mask_height"]), int(meta["mask_width"]))
    model = VelocityModel(
        data_dim=int(meta["data_dim"]),
        mode=meta["mode"],
        num_classes=int(meta["num_classes"]) or 10,
        mask_shape=mask_shape,
        width=int(meta["width"]),
        hidden_layers=int(meta["hidden_layers"]),
        time_embed_dim=int(meta["time_embed_dim"]),
        seed=0,
    )
    params, ema = load_checkpoint(checkpoint_path)
    model.set_params(ema if use_ema else params)
    return model, meta


# -- shared helpers -------------------------------------------------------------


def _sorted_files(directory, suffixes=(".pgm",)) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DomainError(f"not a directory: {directory}")
    files = sorted(p for p in d.iterdir() if p.suffix in suffixes)
    if not files:
        raise DomainError(f"no raster files in {directory}")
    return files


def _load_mask_dir(directory) -> tuple[list[np.ndarray], list[Path]]:
    files = _sorted_files(directory)
    return [rasters.load_mask(p) for p in files], files


def _bins_from(cfg_like: dict[str, str] | None, num_classes: int, max_coverage: float):
    if cfg_like is not None:
        num_classes = int(cfg_like.get("num_classes", num_classes))
        max_coverage = float(cfg_like.get("max_coverage", max_coverage))
    return mask_ops.uniform_bins(num_classes, max_coverage)


def _record_seeds(base_seed: int, count: int) -> np.ndarray:
    """Per-record generating seeds, reproducibly derived from the base seed."""
    return np.random.SeedSequence(base_seed).generate_state(count, dtype=np.uint64)


def _render_images(image_model: VelocityModel, mask_stack: np.ndarray, seeds, icfg) -> np.ndarray:
    """Batch-render images conditioned on masks, one base draw per record seed."""
    n = mask_stack.shape[0]
    x0 = np.stack(
        [np.random.default_rng(int(s)).standard_normal(image_model.data_dim) for s in seeds]
    )
    out = integrate(image_model, x0, mask_stack, icfg)
    return np.clip(out, 0.0, 1.0)


def _save_pair(out_dir: Path, stem: str, image: np.ndarray, mask: np.ndarray, side: int):
    image_rel = f"images/{stem}.pgm"
    mask_rel = f"masks/{stem}.pgm"
    rasters.save_image(out_dir / image_rel, image.reshape(side, side))
    rasters.save_mask(out_dir / mask_rel, mask.reshape(side, side))
    return image_rel, mask_rel


# -- train ----------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    task = cfg.get("task")
    if task not in ("two_gaussians", "mask_generator", "image_renderer", "injector"):
        raise DomainError(f"config must set task to a known value, got {task!r}")
    seed = effective_seed(int(cfg.get("seed", "0")))
    side = int(cfg.get("resolution", "16"))
    width = int(cfg.get("width", "128"))
    hidden_layers = int(cfg.get("hidden_layers", "2"))
    time_embed_dim = int(cfg.get("time_embed_dim", "32"))
    tcfg = TrainConfig(
        steps=int(cfg.get("steps", "1000")),
        batch_size=int(cfg.get("batch", "64")),
        lr=float(cfg.get("lr", "1e-3")),
        ema_decay=float(cfg.get("ema_decay", "0.9999")),
        p_drop=float(cfg.get("p_drop", "0.1")),
        seed=seed,
    )

    if task == "two_gaussians":
        data = toys.two_gaussians(int(cfg.get("n_per_class", "500")), seed=seed + 1)
        model = VelocityModel(
            data_dim=2,
            mode=CLASS_CONDITIONAL,
            num_classes=2,
            width=width,
            hidden_layers=hidden_layers,
            time_embed_dim=time_embed_dim,
            seed=seed,
        )
        trainer = lambda cb: train_fm(model, data, linear_schedule(), tcfg, callback=cb)
        extra = {"task": task}
    elif task == "mask_generator":
        mask_list, _ = _load_mask_dir(cfg["data_masks"])
        bins = _bins_from(cfg, 10, 0.05)
        stack = np.stack(mask_list)
        if stack.shape[1:] != (side, side):
            raise ShapeError(f"masks are {stack.shape[1:]}, config resolution is {side}")
        labels = np.asarray(
            [mask_ops.assign_class(mask_ops.coverage(m), bins) for m in mask_list], dtype=np.intp
        )
        model = VelocityModel(
            data_dim=side * side,
            mode=CLASS_CONDITIONAL,
            num_classes=bins.num_classes,
            width=width,
            hidden_layers=hidden_layers,
            time_embed_dim=time_embed_dim,
            seed=seed,
        )
        data = (stack.reshape(len(mask_list), -1).astype(np.float64), labels)
        trainer = lambda cb: train_fm(model, data, linear_schedule(), tcfg, callback=cb)
        extra = {
            "task": task,
            "resolution": str(side),
            "num_classes": str(bins.num_classes),
            "max_coverage": cfg.get("max_coverage", "0.05"),
        }
    elif task == "image_renderer":
        mask_list, mask_files = _load_mask_dir(cfg["data_masks"])
        image_dir = Path(cfg["data_images"])
        images = []
        for mf in mask_files:
            img_path = image_dir / mf.name
            if not img_path.exists():
                raise DomainError(f"no image paired with mask {mf.name}")
            images.append(rasters.load_image(img_path).reshape(-1))
        stack = np.stack(mask_list)
        if stack.shape[1:] != (side, side):
            raise ShapeError(f"masks are {stack.shape[1:]}, config resolution is {side}")
        model = VelocityModel(
            data_dim=side * side,
            mode=MASK_CONDITIONAL,
            mask_shape=(side, side),
            width=width,
            hidden_layers=hidden_layers,
            time_embed_dim=time_embed_dim,
            seed=seed,
        )
        data = (np.stack(images), stack.astype(np.float64))
        trainer = lambda cb: train_fm(model, data, linear_schedule(), tcfg, callback=cb)
        extra = {"task": task, "resolution": str(side)}
    else:  # injector
        mask_list, mask_files = _load_mask_dir(cfg["data_masks"])
        image_dir = Path(cfg["data_images"])
        images = []
        for mf in mask_files:
            img_path = image_dir / mf.name
            if not img_path.exists():
                raise DomainError(f"no image paired with mask {mf.name}")
            images.append(rasters.load_image(img_path).reshape(-1))
        bg_files = _sorted_files(cfg["data_backgrounds"])
        backgrounds = np.stack([rasters.load_image(p).reshape(-1) for p in bg_files])
        stack = np.stack(mask_list).astype(np.float64)
        if stack.shape[1:] != (side, side):
            raise ShapeError(f"masks are {stack.shape[1:]}, config resolution is {side}")
        model = VelocityModel(
            data_dim=side * side,
            mode=MASK_CONDITIONAL,
            mask_shape=(side, side),
            width=width,
            hidden_layers=hidden_layers,
            time_embed_dim=time_embed_dim,
            seed=seed,
        )
        sched = rectified_schedule(float(cfg.get("sigma", "0.1")))
        trainer = lambda cb: train_rf_injector(
            model, (np.stack(images), stack), backgrounds, sched, tcfg, callback=cb
        )
        extra = {"task": task, "resolution": str(side), "sigma": cfg.get("sigma", "0.1")}

    log_every = int(cfg.get("log_every", "50"))
    log_rows: list[tuple[int, float]] = []

    def on_step(step: int, loss: float):
        if step % log_every == 0 or step == tcfg.steps:
            log_rows.append((step, loss))

    state = trainer(on_step)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, state.params, state.ema_params)
    _write_meta(str(out) + ".meta", model, extra)
    with open(str(out) + ".log.tsv", "w", encoding="ascii") as fh:
        fh.write("step\tloss\n")
        for step, loss in log_rows:
            fh.write(f"{step}\t{repr(loss)}\n")
    print(f"wrote checkpoint {out} ({state.step} steps)")
    return EXIT_OK


# -- synthesis policies ----------------------------------------------------------


def _synthesize(
    mask_model_path,
    image_model_path,
    n_total: int,
    class_probs: np.ndarray,
    out_dir: Path,
    base_seed: int,
    ode_steps: int,
    cfg_omega: float,
    method: str,
    provenance_prefix: str,
    perturb: bool = False,
    header: list[str] | None = None,
) -> list[ManifestRecord]:
    mask_model, mask_meta = load_model(mask_model_path)
    image_model, _ = load_model(image_model_path)
    side = int(mask_meta.get("resolution", int(np.sqrt(mask_model.data_dim))))
    bins = _bins_from(mask_meta, 10, 0.05)
    if image_model.mode != MASK_CONDITIONAL:
        raise DomainError("image model must be mask_conditional")
    if image_model.mask_shape != (side, side):
        raise ShapeError(
            f"image model mask_shape {image_model.mask_shape} does not match mask side {side}"
        )

    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    seeds = _record_seeds(base_seed, n_total)
    icfg = IntegratorConfig(method=method, steps=ode_steps, cfg_omega=cfg_omega)

    # Per-record class draws and base noise, batched through the ODE.
    labels = np.empty(n_total, dtype=np.intp)
    x0 = np.empty((n_total, side * side))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        labels[i] = rng.choice(len(class_probs), p=class_probs)
        x0[i] = rng.standard_normal(side * side)
    sampled = integrate(mask_model, x0, labels, icfg)
    mask_stack = (sampled >= 0.5).astype(np.uint8).reshape(n_total, side, side)

    if perturb:
        perturbed = []
        for i, m in enumerate(mask_stack):
            if m.sum() == 0:
                perturbed.append(m)
                continue
            policy = mask_ops.PropagationPolicy(
                variants=1, max_dilate=1, max_erode=1, jitter_px=0, seed=int(seeds[i])
            )
            perturbed.append(mask_ops.propagate(m, policy)[0].mask)
        mask_stack = np.stack(perturbed)

    images = _render_images(image_model, mask_stack.astype(np.float64), seeds, icfg)

    records = []
    digits = len(str(max(n_total - 1, 1)))
    for i in range(n_total):
        stem = f"{provenance_prefix}_{i:0{digits}d}"
        image_rel, mask_rel = _save_pair(out_dir, stem, images[i], mask_stack[i], side)
        cov_class = mask_ops.assign_class(mask_ops.coverage(mask_stack[i]), bins)
        records.append(
            ManifestRecord(
                image_path=image_rel,
                mask_path=mask_rel,
                coverage_class=cov_class,
                strategy="A_mask_gen",
                seed=int(seeds[i]),
                provenance=f"{provenance_prefix};requested_class={labels[i]}"
                + (";perturbed" if perturb else ""),
            )
        )
    write_manifest(out_dir / "manifest.tsv", records, comments=header)
    return records


def cmd_synthesize_indomain(args) -> int:
    if args.k < 1:
        raise DomainError(f"k must be >= 1, got {args.k}")
    n_total = args.k * args.real_count
    _, mask_meta = load_model(args.mask_model)
    bins = _bins_from(mask_meta, 10, 0.05)
    class_probs = np.full(bins.num_classes, 1.0 / bins.num_classes)
    records = _synthesize(
        args.mask_model,
        args.image_model,
        n_total,
        class_probs,
        Path(args.out),
        effective_seed(args.seed),
        args.ode_steps,
        args.cfg_omega,
        args.method,
        "indomain",
        header=[f"policy=indomain x={args.real_count} k={args.k} total={n_total}"],
    )
    print(f"synthesized {len(records)} pairs into {args.out}")
    return EXIT_OK


def cmd_synthesize_crossdomain(args) -> int:
    target_masks, _ = _load_mask_dir(args.target_masks)
    x_target = len(target_masks)
    n_total = math.ceil(args.multiplier * x_target)
    _, mask_meta = load_model(args.mask_model)
    bins = _bins_from(mask_meta, 10, 0.05)
    seed = effective_seed(args.seed)
    stats = mask_ops.estimate_target_stats(target_masks, args.fraction, bins, seed=seed)
    print(
        f"target stats from {stats.n_used}/{x_target} masks: "
        f"histogram={np.array2string(stats.histogram, precision=3)} "
        f"mean_width={stats.mean_width:.3f}",
        file=sys.stderr,
    )
    header = [
        f"policy=crossdomain x_target={x_target} multiplier={args.multiplier} total={n_total}",
        f"stats_masks_used={stats.n_used} fraction={args.fraction}",
        "histogram=" + ",".join(repr(float(v)) for v in stats.histogram),
        f"mean_width={repr(stats.mean_width)}",
    ]
    records = _synthesize(
        args.mask_model,
        args.image_model,
        n_total,
        stats.histogram,
        Path(args.out),
        seed,
        args.ode_steps,
        args.cfg_omega,
        args.method,
        "crossdomain",
        perturb=args.perturb,
        header=header,
    )
    print(f"synthesized {len(records)} pairs into {args.out}")
    return EXIT_OK


def cmd_inject(args) -> int:
    model, meta = load_model(args.model)
    if model.mode != MASK_CONDITIONAL:
        raise DomainError("inject requires a mask_conditional model")
    side = int(meta.get("resolution", int(np.sqrt(model.data_dim))))
    bg_files = _sorted_files(args.backgrounds, suffixes=(".pgm", ".ppm"))
    mask_files = _sorted_files(args.masks)
    if args.pairing == "cartesian":
        pairs = [(b, m) for b in bg_files for m in mask_files]
    else:
        pairs = list(zip(bg_files, mask_files))
    out_dir = Path(args.out)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    icfg = IntegratorConfig(method=args.method, steps=args.ode_steps)
    bins = mask_ops.uniform_bins(args.num_classes, args.max_coverage)
    seed = effective_seed(args.seed)

    records, skipped = [], []
    digits = len(str(max(len(pairs) - 1, 1)))
    for i, (bg_path, mask_path) in enumerate(pairs):
        background = rasters.load_image(bg_path)
        mask = rasters.load_mask(mask_path)
        if background.shape != (side, side) or mask.shape != (side, side):
            msg = f"skipped pair ({bg_path.name}, {mask_path.name}): dims do not match {side}x{side}"
            print(f"warning: {msg}", file=sys.stderr)
            skipped.append(msg)
            continue
        out = integrate_from_background(model, background.reshape(-1), mask, icfg)
        image = np.clip(out, 0.0, 1.0)
        stem = f"inject_{i:0{digits}d}"
        image_rel, mask_rel = _save_pair(out_dir, stem, image, mask, side)
        records.append(
            ManifestRecord(
                image_path=image_rel,
                mask_path=mask_rel,
                coverage_class=mask_ops.assign_class(mask_ops.coverage(mask), bins),
                strategy="C_background_injected",
                seed=seed,
                provenance=f"inject;background={bg_path.name};mask={mask_path.name}",
            )
        )
    write_manifest(out_dir / "manifest.tsv", records, comments=skipped or None)
    print(f"injected {len(records)} pairs into {args.out} ({len(skipped)} skipped)")
    return EXIT_OK


# -- split / evaluate -------------------------------------------------------------


def split_counts(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Floor each share, then hand out the remainder by largest fractional part
    (ties to earlier splits)."""
    raw = [f * n for f in fractions]
    counts = [math.floor(r) for r in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(remainder):
        counts[order[i % len(order)]] += 1
    return counts


def cmd_split(args) -> int:
    fractions = tuple(float(tok) for tok in args.fractions.split(","))
    if len(fractions) != 3:
        raise DomainError("fractions must be three comma-separated numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DomainError(f"fractions must sum to 1, got {sum(fractions)}")
    records, comments = read_manifest(args.manifest)
    seed = effective_seed(args.seed)
    order = np.random.default_rng(seed).permutation(len(records))
    counts = split_counts(len(records), fractions)
    names = ("train", "val", "test")
    assigned = list(records)
    cursor = 0
    for name, count in zip(names, counts):
        for idx in order[cursor : cursor + count]:
            assigned[idx] = records[idx].with_split(name)
        cursor += count
    out_comments = comments + [
        f"split rule: seeded shuffle (seed={seed}) then contiguous blocks; "
        "counts floor(f*N) with remainder to largest fractional part (ties to earlier split)",
        "split counts: " + "/".join(str(c) for c in counts),
    ]
    write_manifest(args.out, assigned, comments=out_comments)
    print(f"split {len(records)} records into {counts[0]}/{counts[1]}/{counts[2]}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        raise DomainError("pred and gt must be directories")
    pred_names = {p.name for p in pred_dir.iterdir() if p.suffix == ".pgm"}
    gt_names = {p.name for p in gt_dir.iterdir() if p.suffix == ".pgm"}
    missing = sorted(pred_names ^ gt_names)
    if missing:
        for name in missing:
            where = "gt" if name in pred_names else "pred"
            print(f"missing counterpart in {where}: {name}", file=sys.stderr)
        return EXIT_EVAL
    if not gt_names:
        raise DomainError("no mask files to evaluate")

    rows = []
    for name in sorted(gt_names):
        soft = rasters.load_image(pred_dir / name)
        pred = (soft >= args.threshold).astype(np.uint8)
        gt = rasters.load_mask(gt_dir / name)
        counts = metrics.confusion(pred, gt)
        rows.append((name, metrics.iou(counts), metrics.f1(counts)))
    miou = float(np.mean([r[1] for r in rows]))
    mf1 = float(np.mean([r[2] for r in rows]))
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("file\tiou\tf1\n")
        for name, i_val, f_val in rows:
            fh.write(f"{name}\t{repr(i_val)}\t{repr(f_val)}\n")
        fh.write(f"__mean__\t{repr(miou)}\t{repr(mf1)}\n")
    report: dict[str, float] = {}
    if (args.features_real is None) != (args.features_syn is None):
        raise DomainError("--features-real and --features-syn must be given together")
    if args.features_real is not None:
        real = metrics.load_feature_set_tsv(args.features_real)
        syn = metrics.load_feature_set_tsv(args.features_syn)
        report["fid"] = metrics.fid(real, syn)
        report["kid_x1000"] = 1000.0 * metrics.kid(real, syn)
    report["miou"] = miou
    report["f1"] = mf1
    if args.report:
        metrics.write_metric_report(args.report, report)
    print(f"evaluated {len(rows)} pairs: mIoU={miou:.4f} F1={mf1:.4f}")
    return EXIT_OK


# -- propagate / stats -------------------------------------------------------------


def cmd_propagate(args) -> int:
    mask_list, files = _load_mask_dir(args.masks)
    out_dir = Path(args.out)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    image_model = None
    side = mask_list[0].shape[0]
    if args.image_model:
        image_model, _ = load_model(args.image_model)
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
    seed = effective_seed(args.seed)
    bins = mask_ops.uniform_bins(args.num_classes, args.max_coverage)
    icfg = IntegratorConfig(method=args.method, steps=args.ode_steps)

    records = []
    for i, (m, src) in enumerate(zip(mask_list, files)):
        policy = mask_ops.PropagationPolicy(
            variants=args.k,
            max_dilate=args.max_dilate,
            max_erode=args.max_erode,
            jitter_px=args.jitter,
            preserve_connectivity=not args.allow_topology_change,
            seed=seed + i,
        )
        for j, variant in enumerate(mask_ops.propagate(m, policy)):
            stem = f"prop_{i:04d}_{j}"
            mask_rel = f"masks/{stem}.pgm"
            rasters.save_mask(out_dir / mask_rel, variant.mask)
            image_rel = ""
            if image_model is not None:
                seeds = _record_seeds(seed + i, args.k)
                images = _render_images(
                    image_model, variant.mask[None].astype(np.float64), seeds[j : j + 1], icfg
                )
                image_rel = f"images/{stem}.pgm"
                rasters.save_image(out_dir / image_rel, images[0].reshape(side, side))
            records.append(
                ManifestRecord(
                    image_path=image_rel,
                    mask_path=mask_rel,
                    coverage_class=mask_ops.assign_class(mask_ops.coverage(variant.mask), bins),
                    strategy="B_propagated",
                    seed=seed + i,
                    provenance=f"base={src.name};variant={j};{variant.provenance}",
                )
            )
    write_manifest(out_dir / "manifest.tsv", records)
    print(f"propagated {len(files)} masks into {len(records)} variants")
    return EXIT_OK


def cmd_stats(args) -> int:
    mask_list, _ = _load_mask_dir(args.masks)
    bins = mask_ops.uniform_bins(args.num_classes, args.max_coverage)
    stats = mask_ops.estimate_target_stats(
        mask_list, args.fraction, bins, seed=effective_seed(args.seed)
    )
    with open(args.out, "w", encoding="ascii") as fh:
        fh.write("key\tvalue\n")
        for c, freq in enumerate(stats.histogram):
            fh.write(f"class_{c}\t{repr(float(freq))}\n")
        fh.write(f"mean_width\t{repr(stats.mean_width)}\n")
        fh.write(f"n_used\t{stats.n_used}\n")
    print(f"stats over {stats.n_used}/{len(mask_list)} masks written to {args.out}")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a key=value config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.meta/.log.tsv written beside)")
    p.set_defaults(fn=cmd_train)

    def add_sampling_flags(p, with_cfg=True):
        p.add_argument("--ode-steps", type=int, default=50)
        p.add_argument("--method", choices=("euler", "heun"), default="euler")
        p.add_argument("--seed", type=int, default=0)
        if with_cfg:
            p.add_argument("--cfg-omega", type=float, default=1.2)

    p = sub.add_parser("synthesize-indomain", help="sample k*x mask/image pairs")
    p.add_argument("--mask-model", required=True)
    p.add_argument("--image-model", required=True)
    p.add_argument("--real-count", type=int, required=True, help="real training set size x")
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--out", required=True)
    add_sampling_flags(p)
    p.set_defaults(fn=cmd_synthesize_indomain)

    p = sub.add_parser(
        "synthesize-crossdomain", help="target-statistics-guided synthesis of multiplier*x pairs"
    )
    p.add_argument("--mask-model", required=True)
    p.add_argument("--image-model", required=True)
    p.add_argument("--target-masks", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--multiplier", type=float, default=4.0)
    p.add_argument("--perturb", action="store_true", help="apply width perturbations to masks")
    p.add_argument("--out", required=True)
    add_sampling_flags(p)
    p.set_defaults(fn=cmd_synthesize_crossdomain)

    def add_binning_flags(p):
        p.add_argument("--num-classes", type=int, default=10)
        p.add_argument("--max-coverage", type=float, default=0.05)

    p = sub.add_parser("inject", help="render masks onto backgrounds via the injector model")
    p.add_argument("--model", required=True)
    p.add_argument("--backgrounds", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--pairing", choices=("zip", "cartesian"), default="zip")
    p.add_argument("--out", required=True)
    add_sampling_flags(p, with_cfg=False)
    add_binning_flags(p)
    p.set_defaults(fn=cmd_inject)

    p = sub.add_parser("split", help="assign train/val/test splits to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fractions", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("evaluate", help="IoU/F1 of predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="optional named-column summary TSV")
    p.add_argument("--features-real", default=None, help="feature TSV for FID/KID reporting")
    p.add_argument("--features-syn", default=None, help="feature TSV for FID/KID reporting")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("propagate", help="structure-preserving mask variants")
    p.add_argument("--masks", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-dilate", type=int, default=1)
    p.add_argument("--max-erode", type=int, default=1)
    p.add_argument("--jitter", type=int, default=1)
    p.add_argument("--allow-topology-change", action="store_true")
    p.add_argument("--image-model", default=None, help="optionally render images for variants")
    p.add_argument("--out", required=True)
    add_sampling_flags(p, with_cfg=False)
    add_binning_flags(p)
    p.set_defaults(fn=cmd_propagate)

    p = sub.add_parser("stats", help="coverage-class histogram and width summary")
    p.add_argument("--masks", required=True)
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    add_binning_flags(p)
    p.set_defaults(fn=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DomainError, ShapeError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
