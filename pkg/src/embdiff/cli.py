"""Single command-line entry point wiring every module.

Exit codes: 0 success, 1 failed precondition or broken artifact (with a
machine-parseable ``error: <where>: <type>: <message>`` line on stderr),
2 usage errors. Every run with an output directory writes a run manifest
(config hash, seeds, git state, versions).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import load_embeddings, save_embeddings, write_file_manifest, write_run_manifest
from .data.phantom import PhantomSpec, generate_phantom
from .data.preprocess import center_crop_resize, rescale_intensity
from .data.records import DEFAULT_LABELSET, SampleRecord
from .data.shards import load_records, write_shards
from .diffusion.schedule import build_schedule
from .diffusion.training import TrainConfig, train_diffusion
from .diffusion.unet import DenoiserConfig
from .encoder import EncoderConfig, VitImageEncoder, embed_global_batch
from .errors import ConfigError, DataError, EmbdiffError
from .harness.classifier import ClassifierConfig, ClassifierFeatureExtractor, load_classifier, save_classifier, train_classifier
from .harness.experiment import (
    ExperimentPlan,
    ExperimentRow,
    attach_significance,
    run_experiment,
    select_checkpoint,
)
from .harness.report import emit_report
from .harness.subsets import nest_regimes
from .metrics import fid
from .pipeline import (
    build_synthesizer,
    fit_feature_extractor,
    prepare_conditions,
    prepare_latents,
    reconstruction_generate_fn,
)
from .seg import SegParams, diagnose_failure_modes, grid_search, match_and_score
from .segpipe import CheckpointSegmenter
from .synthesis import SynthesisPlan, build_synthetic_dataset
from .vae import Vae, VaeConfig, build_vae, train_vae


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc


def _encoder_from_args(args) -> VitImageEncoder:
    cfg = EncoderConfig(
        variant=args.encoder_variant,
        seed=args.encoder_seed,
        weights_file=args.encoder_weights,
    )
    return VitImageEncoder(cfg)


def _add_encoder_args(parser):
    parser.add_argument("--encoder-variant", default="v1", choices=["v1", "v2"])
    parser.add_argument("--encoder-seed", type=int, default=0)
    parser.add_argument("--encoder-weights", default=None)


# ---------------------------------------------------------------- data

def cmd_data_phantom(args) -> int:
    spec = PhantomSpec(seed=args.seed, side=args.side)
    records = generate_phantom(spec, args.n)
    write_shards(records, args.out, shard_size=args.shard_size, labelset=DEFAULT_LABELSET)
    write_run_manifest(args.out, "data phantom", vars(args), {"seed": args.seed})
    print(f"wrote {len(records)} phantom records to {args.out}")
    return 0


def cmd_data_preprocess(args) -> int:
    from PIL import Image as PILImage

    in_dir = Path(getattr(args, "in"))
    if not in_dir.exists():
        raise DataError(f"input directory not found: {in_dir}")
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in (".png", ".tif", ".tiff"))
    if not files:
        raise DataError(f"no raster images in {in_dir}")
    records = []
    for i, path in enumerate(files):
        raw = np.asarray(PILImage.open(path))
        if raw.ndim == 3:
            raw = raw[:, :, 0]
        img = rescale_intensity(raw)
        img = center_crop_resize(img, args.side)
        records.append(
            SampleRecord(
                id=f"pre-{i:06d}",
                image=img,
                labels=np.zeros(len(DEFAULT_LABELSET), dtype=np.int8),
            )
        )
    write_shards(records, args.out, labelset=DEFAULT_LABELSET)
    write_run_manifest(args.out, "data preprocess", vars(args), {})
    print(f"preprocessed {len(records)} images to {args.out}")
    return 0


# ---------------------------------------------------------------- embed

def cmd_embed(args) -> int:
    records = load_records(getattr(args, "in"))
    encoder = _encoder_from_args(args)
    images = np.stack([rec.image for rec in records])
    tokens = embed_global_batch(images, encoder)
    save_embeddings(args.out, [rec.id for rec in records], tokens, encoder.cfg.encoder_id)
    write_file_manifest(args.out, "embed", vars(args), {"encoder_seed": args.encoder_seed})
    print(f"embedded {len(records)} records -> {args.out} ({encoder.cfg.encoder_id})")
    return 0


# ---------------------------------------------------------------- vae

def cmd_vae_train(args) -> int:
    records = load_records(getattr(args, "in"))
    images = np.stack([rec.image for rec in records])
    cfg = VaeConfig(
        side=images.shape[1],
        down_factor=args.down,
        channels=args.channels,
        epochs=args.epochs,
        seed=args.seed,
    )
    vae = train_vae(images, cfg)
    vae.save(args.out)
    write_run_manifest(Path(args.out).parent, "vae train", vars(args), {"seed": args.seed})
    final = vae.history["eval_recon"][-1]
    print(f"trained VAE ({cfg.down_factor}x down, {cfg.channels}ch), eval recon MSE {final:.5f}")
    return 0


def cmd_vae_roundtrip(args) -> int:
    vae = Vae.load(args.vae)
    records = load_records(getattr(args, "in"))
    errors = []
    for rec in records[: args.limit]:
        recon = vae.decode(vae.encode(rec.image))
        errors.append(np.abs(recon.astype(np.float64) - rec.image.astype(np.float64)).mean())
    lines = [
        f"roundtrip.count={len(errors)}",
        f"roundtrip.mae_mean={np.mean(errors):.4f}",
        f"roundtrip.mae_max={np.max(errors):.4f}",
    ]
    text = "\n".join(lines) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------- dm

def cmd_dm_train(args) -> int:
    cfg = _load_json(args.config)
    shards = cfg["data"]["shards"]
    records = load_records(shards)
    vae = Vae.load(cfg["vae"]["weights"]) if "weights" in cfg.get("vae", {}) else build_vae(
        VaeConfig(side=records[0].side, down_factor=1, channels=3)
    )
    encoder = VitImageEncoder(EncoderConfig(**cfg.get("encoder", {})))
    latents = prepare_latents(records, vae)
    conds = prepare_conditions(records, encoder)
    schedule = build_schedule(**cfg.get("schedule", {"T": 1000, "kind": "linear"}))
    den_cfg = DenoiserConfig(
        latent_side=latents.shape[1],
        latent_channels=latents.shape[3],
        cond_dim=conds.shape[2],
        cond_len=conds.shape[1],
        **cfg.get("denoiser", {}),
    )
    train_cfg = TrainConfig(**cfg.get("train", {}))
    out_dir = cfg.get("out", "runs/dm")
    result = train_diffusion(latents, conds, den_cfg, train_cfg, schedule, out_dir)
    write_run_manifest(out_dir, "dm train", cfg, {"seed": train_cfg.seed})
    status = "aborted (non-finite loss)" if result.aborted else "done"
    print(f"dm train {status}: {len(result.losses)} steps, final checkpoint {result.final_checkpoint}")
    return 0


def cmd_dm_sample(args) -> int:
    ids, tokens, encoder_id = load_embeddings(args.cond)
    synthesizer = build_synthesizer(args.ckpt, Vae.load(args.vae), None, n_steps=args.n_steps)
    seeds = [int(s) for s in np.random.SeedSequence([args.seed]).generate_state(len(ids))]
    images = synthesizer.generate(tokens, seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from PIL import Image as PILImage

    for rec_id, img in zip(ids, images):
        PILImage.fromarray(img).save(out / f"{rec_id}.png")
    write_run_manifest(out, "dm sample", vars(args), {"seed": args.seed})
    print(f"sampled {len(ids)} images ({encoder_id}) -> {out}")
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth_build(args) -> int:
    subset = load_records(args.subset)
    vae = Vae.load(args.vae)
    encoder = _encoder_from_args(args)
    synthesizer = build_synthesizer(args.ckpt, vae, encoder, n_steps=args.n_steps)
    plan = SynthesisPlan(
        strategy=args.strategy, ratio=args.ratio, seed=args.seed, n_steps=args.n_steps
    )
    manifest = build_synthetic_dataset(subset, plan, synthesizer, args.out, labelset=DEFAULT_LABELSET)
    write_run_manifest(args.out, "synth build", vars(args), {"seed": args.seed})
    print(f"built {manifest['count']} synthetic records ({args.strategy}, 1:{args.ratio}) -> {args.out}")
    return 0


# ---------------------------------------------------------------- metrics

def _extractor_from_arg(spec: str):
    if spec == "pixels":
        def pixels(images):
            arr = np.asarray(images, dtype=np.float64) / 255.0
            b, h, w, _ = arr.shape
            gray = arr.mean(axis=3)
            blocks = gray.reshape(b, 8, h // 8, 8, w // 8).mean(axis=(2, 4))
            return blocks.reshape(b, -1)

        pixels.identity = "pixels-8x8"
        return pixels
    model, cfg = load_classifier(spec)
    return ClassifierFeatureExtractor(model=model, identity=f"classifier:{Path(spec).name}")


def cmd_metrics_fid(args) -> int:
    real = np.stack([rec.image for rec in load_records(args.real)])
    synth = np.stack([rec.image for rec in load_records(args.synth)])
    extractor = _extractor_from_arg(args.extractor)
    value = fid(real, synth, extractor)
    print(f"fid={value:.6f}")
    print(f"extractor={getattr(extractor, 'identity', args.extractor)}")
    return 0


def cmd_metrics_fit_extractor(args) -> int:
    records = load_records(getattr(args, "in"))
    cfg = ClassifierConfig(max_epochs=args.epochs, seed=args.seed)
    n_val = max(8, len(records) // 10)
    model, _ = train_classifier(records[n_val:], records[:n_val], cfg)
    save_classifier(model, cfg, args.out)
    write_file_manifest(args.out, "metrics fit-extractor", vars(args), {"seed": args.seed})
    print(f"feature extractor -> {args.out}")
    return 0


# ---------------------------------------------------------------- seg

def cmd_seg_run(args) -> int:
    records = load_records(getattr(args, "in"))
    vae = Vae.load(args.vae)
    encoder = _encoder_from_args(args)
    segmenter = CheckpointSegmenter({"ckpt": args.ckpt}, vae, encoder, noise_seed=args.seed)
    params = SegParams(tau=args.tau, timestep=args.t, anchor_side=args.grid, checkpoint="ckpt")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from PIL import Image as PILImage

    index = []
    scores = []
    for rec in records:
        segs = segmenter(rec, params)
        entry = {"id": rec.id, "n_segments": segs.n_segments, "masks": []}
        for si, mask in enumerate(segs.image_masks):
            name = f"{rec.id}.seg{si}.png"
            PILImage.fromarray(mask.astype(bool)).save(out / name)
            entry["masks"].append(name)
        if rec.masks:
            result = match_and_score(segs, rec.masks)
            entry["mean_dice"] = result.mean_dice
            entry["combined"] = result.combined
            entry["failure_modes"] = sorted(diagnose_failure_modes(segs, rec.masks))
            scores.append(result.mean_dice)
        index.append(entry)
    (out / "index.json").write_text(json.dumps(index, indent=2))
    write_run_manifest(out, "seg run", vars(args), {"seed": args.seed})
    if scores:
        print(f"segmented {len(records)} records, mean dice {np.mean(scores):.4f}")
    else:
        print(f"segmented {len(records)} records (no ground truth to score)")
    return 0


def cmd_seg_sweep(args) -> int:
    grid_cfg = _load_json(args.grid_file)
    records = load_records(getattr(args, "in"))
    vae = Vae.load(args.vae)
    encoder = _encoder_from_args(args)
    segmenter = CheckpointSegmenter({"ckpt": args.ckpt}, vae, encoder, noise_seed=args.seed)
    grid = [
        SegParams(tau=tau, timestep=t, anchor_side=a, checkpoint="ckpt")
        for tau in grid_cfg["taus"]
        for t in grid_cfg["timesteps"]
        for a in grid_cfg["anchors"]
    ]
    best, table = grid_search(records, grid, segmenter)
    best_row = next(
        r
        for r in table
        if (r["tau"], r["timestep"], r["anchor_side"]) == (best.tau, best.timestep, best.anchor_side)
    )
    out = Path(args.out)
    emit_report(out, seg_table=table, best_seg=best_row)
    (out / "best_params.json").write_text(
        json.dumps({"tau": best.tau, "timestep": best.timestep, "anchor_side": best.anchor_side})
    )
    write_run_manifest(out, "seg sweep", vars(args), {"seed": args.seed})
    print(
        f"best params: tau={best.tau} t={best.timestep} grid={best.anchor_side}x{best.anchor_side} "
        f"(mean dice {best_row['mean_dice']:.4f})"
    )
    return 0


# ---------------------------------------------------------------- exp

def cmd_exp_run(args) -> int:
    from .artifacts import file_sha256

    plan_cfg = _load_json(args.plan)
    train_records = load_records(plan_cfg["train_shards"])
    test_records = load_records(plan_cfg["test_shards"])
    vae = Vae.load(plan_cfg["vae"])
    encoder = VitImageEncoder(EncoderConfig(**plan_cfg.get("encoder", {})))
    seed = plan_cfg.get("seed", 0)
    sizes = plan_cfg.get("regime_sizes", [500, 100, 50])
    regime = nest_regimes(train_records, sizes, DEFAULT_LABELSET, seed)
    by_id = {rec.id: rec for rec in train_records}

    cls_cfg = ClassifierConfig(**plan_cfg.get("classifier", {}))
    out_dir = Path(plan_cfg.get("out", "runs/exp"))
    out_dir.mkdir(parents=True, exist_ok=True)
    vae_hash = file_sha256(plan_cfg["vae"])
    ckpt_hash = file_sha256(plan_cfg["checkpoint"]) if "checkpoint" in plan_cfg else None

    rows = []
    artifacts_by_tag = {}
    for size in sizes:
        subset = [by_id[i] for i in regime.subsets[size]]
        row = run_experiment(
            ExperimentPlan(mode="real_only", regime_size=size, seed=seed, classifier=cls_cfg),
            subset,
            test_records,
        )
        rows.append(row)
        artifacts_by_tag[row.plan.tag] = {"vae": vae_hash}
        for conf in plan_cfg.get("configurations", []):
            synth_records = None
            synth_hashes = None
            if conf["strategy"] != "copy":
                synthesizer = build_synthesizer(
                    plan_cfg["checkpoint"], vae, encoder, n_steps=plan_cfg.get("n_steps", 25)
                )
                synth_dir = out_dir / f"synth-{conf['strategy']}-1to{conf['ratio']}-N{size}"
                manifest = build_synthetic_dataset(
                    subset,
                    SynthesisPlan(strategy=conf["strategy"], ratio=conf["ratio"], seed=seed),
                    synthesizer,
                    synth_dir,
                    labelset=DEFAULT_LABELSET,
                )
                synth_records = load_records(synth_dir)
                synth_hashes = [s["sha256"] for s in manifest["shards"]]
            row = run_experiment(
                ExperimentPlan(
                    mode=conf.get("mode", "augmentation"),
                    regime_size=size,
                    ratio=conf["ratio"],
                    strategy=conf["strategy"],
                    seed=seed,
                    classifier=cls_cfg,
                ),
                subset,
                test_records,
                synthetic_records=synth_records,
            )
            rows.append(row)
            artifacts_by_tag[row.plan.tag] = {
                "vae": vae_hash,
                "checkpoint": ckpt_hash,
                "synth_shards": synth_hashes,
            }

    attach_significance(rows)
    results_path = out_dir / "results.jsonl"
    with open(results_path, "w") as f:
        for row in rows:
            base = row.to_dict()
            for fold_idx, auc in enumerate(row.fold_aucs):
                record = {
                    "tag": base["tag"],
                    "mode": base["mode"],
                    "strategy": base["strategy"],
                    "ratio": base["ratio"],
                    "n": base["n"],
                    "fold": fold_idx,
                    "auc": auc,
                    "seed": seed,
                    "artifacts": artifacts_by_tag.get(base["tag"], {}),
                }
                f.write(json.dumps(record) + "\n")
    emit_report(out_dir, score_rows=rows)
    write_run_manifest(out_dir, "exp run", plan_cfg, {"seed": seed})
    print(f"ran {len(rows)} configurations ({sum(len(r.fold_aucs) for r in rows)} folds) -> {results_path}")
    return 0


def cmd_exp_report(args) -> int:
    results_path = Path(args.results)
    if not results_path.exists():
        raise DataError(f"results file not found: {results_path}")
    by_tag: dict[str, dict] = {}
    for line in results_path.read_text().splitlines():
        d = json.loads(line)
        entry = by_tag.setdefault(d["tag"], {"meta": d, "folds": {}})
        entry["folds"][d["fold"]] = d["auc"]
    rows = []
    for tag, entry in by_tag.items():
        d = entry["meta"]
        aucs = [entry["folds"][k] for k in sorted(entry["folds"])]
        plan = ExperimentPlan(
            mode=d["mode"],
            regime_size=d["n"],
            ratio=d["ratio"] or 1,
            strategy=d["strategy"] or "reconstruction",
            folds=len(aucs),
        )
        rows.append(
            ExperimentRow(
                plan=plan,
                fold_aucs=aucs,
                mean=float(np.mean(aucs)),
                sd=float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0,
            )
        )
    attach_significance(rows)
    written = emit_report(args.out, score_rows=rows)
    print("\n".join(f"{k}: {v}" for k, v in sorted(written.items())))
    return 0


def cmd_exp_select_checkpoint(args) -> int:
    records = load_records(getattr(args, "in"))
    vae = Vae.load(args.vae)
    encoder = _encoder_from_args(args)
    extractor = _extractor_from_arg(args.extractor)
    checkpoints = sorted(str(p) for p in Path(args.ckpt_dir).glob("step-*.npz"))
    generate = reconstruction_generate_fn(
        vae, encoder, records, args.n_images, args.n_steps, args.seed
    )
    best, curve = select_checkpoint(checkpoints, np.stack([r.image for r in records[: args.n_images]]), extractor, generate)
    out = Path(args.out)
    emit_report(out, fid_curve=curve)
    (out / "best_checkpoint.json").write_text(json.dumps({"checkpoint": best}))
    write_run_manifest(out, "exp select-checkpoint", vars(args), {"seed": args.seed})
    print(f"best checkpoint: {best}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embdiff", description=__doc__)
    parser.add_argument("--version", action="version", version=f"embdiff {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="phantom generation and preprocessing")
    data_sub = data.add_subparsers(dest="subcommand", required=True)
    p = data_sub.add_parser("phantom", help="generate phantom radiographs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--shard-size", type=int, default=512)
    p.set_defaults(func=cmd_data_phantom)
    p = data_sub.add_parser("preprocess", help="rescale + crop/resize raw images")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--side", type=int, default=64)
    p.set_defaults(func=cmd_data_preprocess)

    p = sub.add_parser("embed", help="write global-condition embeddings for shards")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_embed)

    vae_p = sub.add_parser("vae", help="train or probe the latent autoencoder")
    vae_sub = vae_p.add_subparsers(dest="subcommand", required=True)
    p = vae_sub.add_parser("train")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--down", type=int, default=4)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_vae_train)
    p = vae_sub.add_parser("roundtrip")
    p.add_argument("--in", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--limit", type=int, default=64)
    p.set_defaults(func=cmd_vae_roundtrip)

    dm = sub.add_parser("dm", help="train or sample the diffusion model")
    dm_sub = dm.add_subparsers(dest="subcommand", required=True)
    p = dm_sub.add_parser("train")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_dm_train)
    p = dm_sub.add_parser("sample")
    p.add_argument("--cond", required=True, help="embeddings file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-steps", type=int, default=25)
    p.set_defaults(func=cmd_dm_sample)

    synth = sub.add_parser("synth", help="build synthetic datasets")
    synth_sub = synth.add_subparsers(dest="subcommand", required=True)
    p = synth_sub.add_parser("build")
    p.add_argument("--subset", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--strategy", choices=["reconstruction", "interpolation"], required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-steps", type=int, default=25)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_synth_build)

    met = sub.add_parser("metrics", help="generation metrics")
    met_sub = met.add_subparsers(dest="subcommand", required=True)
    p = met_sub.add_parser("fid")
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--extractor", default="pixels")
    p.set_defaults(func=cmd_metrics_fid)
    p = met_sub.add_parser("fit-extractor")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_metrics_fit_extractor)

    seg = sub.add_parser("seg", help="zero-shot segmentation")
    seg_sub = seg.add_subparsers(dest="subcommand", required=True)
    p = seg_sub.add_parser("run")
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--grid", type=int, required=True, help="anchor grid side")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_seg_run)
    p = seg_sub.add_parser("sweep")
    p.add_argument("--grid-file", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_seg_sweep)

    exp = sub.add_parser("exp", help="experiment harness")
    exp_sub = exp.add_subparsers(dest="subcommand", required=True)
    p = exp_sub.add_parser("run")
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_exp_run)
    p = exp_sub.add_parser("report")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_exp_report)
    p = exp_sub.add_parser("select-checkpoint")
    p.add_argument("--in", required=True, help="real reference shards")
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--extractor", default="pixels")
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int, default=64)
    p.add_argument("--n-steps", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    _add_encoder_args(p)
    p.set_defaults(func=cmd_exp_select_checkpoint)

    return parser


def main(argv=None) -> int:
    import os

    workers = os.environ.get("EMBDIFF_WORKERS")
    if workers:
        import torch

        torch.set_num_threads(max(1, int(workers)))

    parser = build_parser()
    args = parser.parse_args(argv)
    where = args.command + ("." + args.subcommand if getattr(args, "subcommand", None) else "")
    try:
        return args.func(args)
    except EmbdiffError as exc:
        print(f"error: {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {where}: FileNotFoundError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
