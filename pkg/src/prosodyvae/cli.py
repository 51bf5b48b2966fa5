"""Command-line entry point.

Subcommands: prepare, gen-synthetic, train, synthesize, copy-synth,
evaluate, sweep, probe. Every run resolves one config (file + environment +
key=value overrides), writes the resolved snapshot into the output
directory, and funnels all randomness through the run seed.

Exit codes: 0 success, 2 usage/config error, 1 runtime failure.
"""

import argparse
import copy
import json
import logging
import sys
import wave
from pathlib import Path

import numpy as np
import torch

from . import errors, featio, text
from .checkpoint import load_checkpoint
from .config import Config, load_config, save_config
from .corpus import (
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    load_manifest,
    save_manifest,
)
from .corpus.synthetic import render_waveform
from .evalkit import (
    EvalReport,
    MelPitchEstimator,
    SyntheticEvalContext,
    evaluate_posterior,
    evaluate_prior,
    leakage_probe,
    pooled_posterior_means,
    sample_sentences,
)
from .evalkit.protocols import load_embeddings, load_hypotheses
from .training import collate, split_corpus, train

log = logging.getLogger("prosodyvae")

PACKAGE_ERRORS = (
    errors.InvalidInput,
    errors.InvalidSpec,
    errors.ManifestError,
    errors.EmptyText,
    errors.UnknownSymbol,
    errors.EmptyOutput,
    errors.ReferenceTooShort,
    errors.MissingDurations,
    errors.DimMismatch,
    errors.CorruptCheckpoint,
    errors.StageMismatch,
    errors.MetricUndefined,
)


def _setup_logging(out_dir=None):
    handlers = [logging.StreamHandler(sys.stderr)]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(Path(out_dir) / "run.log"))
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        handlers=handlers,
        force=True,
    )


def _snapshot(cfg, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out_dir / "config.txt")


def _load_cfg(args):
    return load_config(getattr(args, "config", None), overrides=getattr(args, "set", None) or [])


def _synthetic_context(cfg):
    return SyntheticEvalContext(
        f0_bases=tuple(cfg.synthetic.f0_base_per_factor),
        vocab_size=cfg.synthetic.token_vocab_size,
        feat_cfg=cfg.corpus,
        pitch_cfg=cfg.pitch,
        eval_cfg=cfg.eval,
    )


def cmd_gen_synthetic(args, cfg):
    _snapshot(cfg, args.out)
    spec = SyntheticCorpusSpec.from_config(cfg.synthetic)
    log.info("generating synthetic corpus: %d utterances, %d coarse factors, seed %d",
             spec.n_utterances, spec.n_coarse_factors, spec.seed)
    manifest = generate_synthetic_corpus(spec, cfg.corpus)
    path = Path(args.out) / "manifest.tsv"
    save_manifest(manifest, path)
    log.info("wrote %s (%d records)", path, len(manifest))
    return 0


def cmd_prepare(args, cfg):
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.manifest)
    inventory = text.build_inventory(manifest, mode=args.mode, include_unk=args.unk)
    inv_path = Path(args.out) / "inventory.txt"
    inventory.save(inv_path)
    for rec in manifest:
        rec.token_ids = np.asarray(
            text.encode_text(rec.transcript, inventory, mode=args.mode), dtype=np.int64
        )
        if rec.durations_frames is not None and rec.durations_frames.size != rec.token_ids.size:
            rec.durations_frames = None  # re-tokenized text invalidates old alignments
    out_manifest = Path(args.out) / "manifest.tsv"
    save_manifest(manifest, out_manifest)
    log.info("inventory of %d symbols -> %s; re-encoded manifest -> %s",
             len(inventory), inv_path, out_manifest)
    return 0


def cmd_train(args, cfg):
    cfg.validate()
    _setup_logging(args.out)
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.corpus)
    log.info("training stage=%s on %d records (seed %d)", cfg.train.stage, len(manifest), cfg.seed)
    _, history = train(cfg, manifest, out_dir=args.out)
    if history:
        log.info("final step record: %s", json.dumps(history[-1]))
    log.info("checkpoint written to %s", args.out)
    return 0


def cmd_copy_synth(args, cfg):
    _setup_logging(args.out)
    system, ckpt_cfg, meta = load_checkpoint(args.checkpoint)
    cfg = ckpt_cfg if args.config is None else cfg
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.corpus)
    records = list(manifest)[: args.limit] if args.limit else list(manifest)
    generator = torch.Generator().manual_seed(cfg.seed)
    out_dir = Path(args.out) / "features"
    listing = []
    for start in range(0, len(records), 32):
        chunk = records[start : start + 32]
        batch = collate(chunk)
        frames = system.copy_synthesize(
            batch.token_ids, batch.token_mask, batch.mel, batch.frame_mask,
            batch.durations_list, sample_posterior=cfg.eval.posterior_sample,
            generator=generator,
        )
        for rec, pred in zip(chunk, frames):
            rel = f"features/{rec.utt_id}.mel.plf"
            featio.write_matrix(Path(args.out) / rel, pred.numpy())
            listing.append(f"{rec.utt_id}\t{rel}")
    (Path(args.out) / "outputs.tsv").write_text("\n".join(listing) + "\n")
    log.info("copy-synthesized %d utterances from %s checkpoint", len(records), meta["stage"])
    return 0


def _write_wav(path, samples, sample_rate):
    data = np.clip(samples, -1.0, 1.0)
    pcm = (data * 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(sample_rate)
        f.writeframes(pcm.tobytes())


def cmd_synthesize(args, cfg):
    _setup_logging(args.out)
    system, ckpt_cfg, meta = load_checkpoint(args.checkpoint)
    cfg = ckpt_cfg if args.config is None else cfg
    _snapshot(cfg, args.out)
    if args.tokens:
        token_ids = np.array([int(t) for t in args.tokens.split()], dtype=np.int64)
    elif args.text:
        if not args.inventory:
            raise errors.InvalidInput("--text requires --inventory")
        inventory = text.SymbolInventory.load(args.inventory)
        token_ids = np.asarray(
            text.encode_text(args.text, inventory, mode=args.mode), dtype=np.int64
        )
    else:
        raise errors.InvalidInput("provide --tokens or --text")

    ids = torch.from_numpy(token_ids).unsqueeze(0)
    mask = torch.ones_like(ids, dtype=torch.bool)
    ref_mel = ref_mask = None
    if args.reference:
        mel = featio.read_matrix(args.reference)
        ref_mel = torch.from_numpy(mel).unsqueeze(0)
        ref_mask = torch.ones(1, mel.shape[0], dtype=torch.bool)
    elif not args.no_reference:
        raise errors.InvalidInput("provide --reference FILE or --no-reference")

    generator = torch.Generator().manual_seed(cfg.seed)
    frames, durations = system.prior_synthesize(
        ids, mask, ref_mel=ref_mel, ref_mask=ref_mask,
        temperature=cfg.eval.temperature, generator=generator,
    )
    mel_out = frames[0].numpy()
    out_dir = Path(args.out)
    featio.write_matrix(out_dir / "synthesized.mel.plf", mel_out)
    (out_dir / "durations.txt").write_text(
        " ".join(str(int(d)) for d in durations[0]) + "\n"
    )
    if args.wav:
        estimator = MelPitchEstimator(cfg.corpus, cfg.pitch, cfg.eval)
        pitch = estimator.estimate(mel_out)
        wav = render_waveform(
            type("M", (), {"frames": mel_out, "n_frames": mel_out.shape[0]})(), pitch, cfg.corpus
        )
        _write_wav(out_dir / "synthesized.wav", wav, cfg.corpus.sample_rate_hz)
    log.info("synthesized %d frames from %d tokens (%s checkpoint)",
             mel_out.shape[0], token_ids.size, meta["stage"])
    return 0


def cmd_evaluate(args, cfg):
    _setup_logging(args.out)
    system, ckpt_cfg, meta = load_checkpoint(args.checkpoint)
    cfg = ckpt_cfg if args.config is None else cfg
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.corpus)
    _, holdout = split_corpus(manifest, cfg.train.holdout_fraction, cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    tag = args.tag or f"{meta['stage']}-z{ckpt_cfg.model.d_z}"
    if args.protocol == "posterior":
        embeddings = load_embeddings(args.embeddings) if args.embeddings else None
        report = evaluate_posterior(
            holdout, system, cfg.corpus, cfg.eval, cfg.pitch,
            generator=generator, model_tag=tag, embeddings=embeddings,
        )
    else:
        rng = np.random.default_rng([cfg.seed, 202])
        refs = holdout[: cfg.eval.n_references]
        sentences = sample_sentences(
            rng, cfg.synthetic.token_vocab_size, cfg.eval.sentences_per_reference,
            cfg.eval.sentence_len_min, cfg.eval.sentence_len_max,
        )
        hypotheses = load_hypotheses(args.hypotheses) if args.hypotheses else None
        report = evaluate_prior(
            refs, sentences, system, cfg.corpus, cfg.eval, cfg.pitch,
            synth_ctx=_synthetic_context(cfg), generator=generator,
            model_tag=tag, hypotheses=hypotheses,
        )
    out = report.save(Path(args.out) / f"report_{args.protocol}")
    log.info("evaluated %d rows -> %s", len(report.rows), out)
    print(report.table())
    return 0


def cmd_probe(args, cfg):
    _setup_logging(args.out)
    system, ckpt_cfg, _ = load_checkpoint(args.checkpoint)
    cfg = ckpt_cfg if args.config is None else cfg
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.corpus)
    pools, labels = pooled_posterior_means(system, list(manifest))
    accuracy = leakage_probe(pools, labels, folds=cfg.eval.probe_folds, seed=cfg.seed)
    result = {"d_z": ckpt_cfg.model.d_z, "n_utterances": len(labels),
              "probe_accuracy": accuracy}
    (Path(args.out) / "probe.json").write_text(json.dumps(result, indent=2) + "\n")
    log.info("leakage probe accuracy: %.4f over %d utterances", accuracy, len(labels))
    print(f"probe accuracy: {accuracy:.4f}")
    return 0


def run_sweep(cfg: Config, manifest, dims, out_dir):
    """Train stage 1 per latent dimension, evaluate reconstruction and probe
    leakage on the shared corpus/seed; returns the list of trend rows."""
    out_dir = Path(out_dir)
    rows = []
    for d_z in dims:
        cfg_d = copy.deepcopy(cfg)
        cfg_d.model.d_z = int(d_z)
        cfg_d.train.stage = "stage1"
        dim_dir = out_dir / f"dz{d_z}"
        log.info("sweep: training stage1 with d_z=%d", d_z)
        system, _ = train(cfg_d, manifest, out_dir=dim_dir / "checkpoint")
        _, holdout = split_corpus(manifest, cfg_d.train.holdout_fraction, cfg_d.seed)
        generator = torch.Generator().manual_seed(cfg_d.seed)
        report = evaluate_posterior(
            holdout, system, cfg_d.corpus, cfg_d.eval, cfg_d.pitch,
            generator=generator, model_tag=f"mvae-{d_z}",
        )
        report.save(dim_dir / "report_posterior")
        pools, labels = pooled_posterior_means(system, list(manifest))
        accuracy = leakage_probe(pools, labels, folds=cfg_d.eval.probe_folds, seed=cfg_d.seed)
        agg = report.aggregates()
        row = {
            "d_z": int(d_z),
            "mcd": agg["mcd"]["mean"],
            "ffe": agg["ffe"]["mean"],
            "probe_accuracy": accuracy,
            "similarity": agg["similarity"]["mean"],
            "f0_stddev": agg["f0_stddev"]["mean"],
            "energy_stddev": agg["energy_stddev"]["mean"],
        }
        rows.append(row)
        log.info("sweep d_z=%d: mcd=%.4f ffe=%.4f probe=%.4f",
                 d_z, row["mcd"], row["ffe"], accuracy)
    with open(out_dir / "trend.jsonl", "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    header = f"{'d_z':>6} {'MCD':>10} {'FFE':>10} {'probe acc':>10} {'d-vec sim':>10}\n"
    lines = [
        f"{r['d_z']:>6} {r['mcd']:>10.4f} {r['ffe']:>10.4f} "
        f"{r['probe_accuracy']:>10.4f} {r['similarity']:>10.4f}"
        for r in rows
    ]
    (out_dir / "trend.txt").write_text(header + "\n".join(lines) + "\n")
    return rows


def cmd_sweep(args, cfg):
    dims = [int(d) for d in args.dims.split(",") if d.strip()]
    if len(dims) < 2:
        raise UsageError("--dims needs at least 2 comma-separated values")
    cfg.validate()
    _setup_logging(args.out)
    _snapshot(cfg, args.out)
    manifest = load_manifest(args.corpus)
    rows = run_sweep(cfg, manifest, dims, args.out)
    print((Path(args.out) / "trend.txt").read_text())
    return 0


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(prog="prosodyvae", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    common(p)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("prepare", help="build a symbol inventory and re-encode a manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=text.MODES, default="char")
    p.add_argument("--unk", action="store_true", help="map unknown symbols to <unk>")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one stage")
    common(p)
    p.add_argument("--corpus", required=True, help="manifest path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("copy-synth", help="posterior-sampling reconstruction")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--limit", type=int, default=0)
    p.set_defaults(func=cmd_copy_synth)

    p = sub.add_parser("synthesize", help="prior-sampling synthesis from tokens/text")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tokens", help="space-separated token ids")
    p.add_argument("--text", help="raw text (requires --inventory)")
    p.add_argument("--inventory", help="symbol inventory file")
    p.add_argument("--mode", choices=text.MODES, default="char")
    p.add_argument("--reference", help="reference mel feature file (PLF1)")
    p.add_argument("--no-reference", action="store_true",
                   help="synthesize without a reference (nat_plain checkpoints)")
    p.add_argument("--wav", action="store_true", help="also render a sinusoidal wav")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="run the posterior or prior protocol")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--protocol", choices=("posterior", "prior"), required=True)
    p.add_argument("--tag", default=None)
    p.add_argument("--hypotheses", help="external utt_id<TAB>text transcripts")
    p.add_argument("--embeddings", help="external utt_id<TAB>csv embedding vectors")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="latent-dimension sweep: train + evaluate + probe")
    common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--dims", required=True, help="comma-separated d_z values (>= 2)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("probe", help="coarse-factor leakage probe on pooled latents")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=cmd_probe)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    torch.set_num_threads(max(1, torch.get_num_threads()))
    _setup_logging(None)
    try:
        cfg = _load_cfg(args)
        return args.func(args, cfg)
    except (errors.ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PACKAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
