"""Command-line interface.

Subcommands: synth, train-ae, train-rvq, train-denoiser, encode, decode,
ablate, eval, selftest. Configuration comes from built-in defaults, an
optional INI file (-c) and repeatable --set section.key=value overrides.
Runtime failures exit 1 with a message; bad usage exits 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import audio, pipeline, quantizer, selftest
from .config import dump_config, load_config
from .synth import synth_dataset


def _add_common(p):
    p.add_argument("-c", "--config", default=None, help="INI config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")


def build_parser():
    ap = argparse.ArgumentParser(prog="dequant",
                                 description="Token-conditioned diffusion speech codec")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic WAV dataset")
    _add_common(p)
    p.add_argument("out_dir")
    p.add_argument("-n", type=int, default=100, help="number of clips")
    p.add_argument("--seed", type=int, default=None, help="override synth seed")

    p = sub.add_parser("train-ae", help="train an autoencoder")
    _add_common(p)
    p.add_argument("path", choices=["continuous", "discrete"])
    p.add_argument("data_dir")
    p.add_argument("model_dir")

    p = sub.add_parser("train-rvq", help="train residual codebooks on encoder outputs")
    _add_common(p)
    p.add_argument("data_dir")
    p.add_argument("model_dir")

    p = sub.add_parser("train-denoiser", help="train condition upsampler + denoiser")
    _add_common(p)
    p.add_argument("data_dir")
    p.add_argument("model_dir")

    p = sub.add_parser("encode", help="WAV -> token file")
    _add_common(p)
    p.add_argument("model_dir")
    p.add_argument("in_wav")
    p.add_argument("out_tokens")

    p = sub.add_parser("decode", help="token file -> WAV")
    _add_common(p)
    p.add_argument("model_dir")
    p.add_argument("in_tokens")
    p.add_argument("out_wav")
    p.add_argument("--mode", choices=["direct", "diffusion"], default="diffusion")
    p.add_argument("--sampler", choices=["ddpm", "ddim", "midway"], default="midway")

    p = sub.add_parser("ablate", help="(tau, gamma) grid -> CSV of mean SNR/LSD")
    _add_common(p)
    p.add_argument("model_dir")
    p.add_argument("test_dir", help="directory of reference WAVs")
    p.add_argument("out_csv")
    p.add_argument("--tau", required=True, help="comma-separated midway steps")
    p.add_argument("--gamma", required=True, help="comma-separated ratios")

    p = sub.add_parser("eval", help="compare decoded WAVs against references")
    _add_common(p)
    p.add_argument("ref_dir")
    p.add_argument("est_dir")
    p.add_argument("out_json")

    p = sub.add_parser("selftest", help="run the oracle-based invariant suite")
    _add_common(p)

    p = sub.add_parser("config", help="print the effective configuration")
    _add_common(p)
    return ap


def _run(args) -> int:
    cfg = load_config(args.config, args.overrides)
    cmd = args.command

    if cmd == "config":
        print(dump_config(cfg), end="")
        return 0

    if cmd == "selftest":
        results = selftest.run(verbose=True)
        return 0 if all(ok for _, ok, _ in results) else 1

    if cmd == "synth":
        spec = cfg.synth
        spec.sample_rate = cfg.sample_rate
        if args.seed is not None:
            spec.seed = args.seed
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        clips = synth_dataset(spec, args.n)
        for i, x in enumerate(clips):
            audio.write_wav(out / f"clip_{i:04d}.wav", x, cfg.sample_rate)
        print(f"wrote {len(clips)} clips to {out}")
        return 0

    if cmd == "train-ae":
        losses = pipeline.train_ae_cmd(cfg, args.path, args.data_dir, args.model_dir)
        print(f"{args.path} AE: loss {losses[0]:.6f} -> {losses[-1]:.6f} "
              f"({len(losses)} steps)")
        return 0

    if cmd == "train-rvq":
        q = pipeline.train_rvq_cmd(cfg, args.data_dir, args.model_dir)
        rate = cfg.sample_rate / cfg.discrete_ae.hop
        print(f"RVQ: {q.n_stages} stages x K={q.K}, "
              f"{quantizer.bitrate(q, rate):.0f} bps at {rate:.1f} Hz frames")
        return 0

    if cmd == "train-denoiser":
        _, losses = pipeline.train_denoiser_cmd(cfg, args.data_dir, args.model_dir)
        print(f"denoiser: loss {losses[0]:.6f} -> {losses[-1]:.6f} "
              f"({len(losses)} steps)")
        return 0

    if cmd == "encode":
        tokens, bps = pipeline.encode_file(cfg, args.model_dir, args.in_wav,
                                           args.out_tokens)
        print(f"{tokens.frames} frames x {tokens.n_stages} stages, {bps:.0f} bps")
        return 0

    if cmd == "decode":
        _, elapsed = pipeline.decode_file(cfg, args.model_dir, args.in_tokens,
                                          args.out_wav, mode=args.mode,
                                          sampler=args.sampler)
        print(f"decoded ({args.mode}) in {elapsed:.2f}s -> {args.out_wav}")
        return 0

    if cmd == "ablate":
        taus = [int(v) for v in args.tau.split(",")]
        gammas = [float(v) for v in args.gamma.split(",")]
        clips, _ = pipeline.load_wav_dir(args.test_dir, cfg.sample_rate)
        rows = pipeline.ablation_grid(cfg, args.model_dir, taus, gammas, clips,
                                      out_csv=args.out_csv)
        print(f"wrote {len(rows)} rows to {args.out_csv}")
        return 0

    if cmd == "eval":
        refs, ref_files = pipeline.load_wav_dir(args.ref_dir, cfg.sample_rate)
        ests, est_files = pipeline.load_wav_dir(args.est_dir, cfg.sample_rate)
        if len(refs) != len(ests):
            raise ValueError(f"{len(refs)} reference vs {len(ests)} estimate clips")
        reports, mean = pipeline.evaluate_pairs(refs, ests)
        out = {"mean": mean,
               "clips": [{"ref": ref_files[i].name, "est": est_files[i].name,
                          **reports[i].to_dict()} for i in range(len(reports))]}
        pipeline.write_json(args.out_json, out)
        print(f"mean SNR {mean['snr_db']:.2f} dB, LSD {mean['lsd_db']:.2f} dB")
        return 0

    raise AssertionError(f"unhandled command {cmd}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (OSError, ValueError, KeyError, IndexError,
            pipeline.MissingModelError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
