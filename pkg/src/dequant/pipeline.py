"""End-to-end orchestration: dataset prep, component training, file coding,
evaluation, and the (tau, gamma) ablation harness.

Model files live together in a model directory:

    continuous_ae.ckpt   waveform <-> continuous latents (diffusion space)
    discrete_ae.ckpt     waveform <-> discrete-path latents (RVQ input)
    rvq.ckpt             residual codebooks
    upsampler.ckpt       token embedding -> continuous latent grid
    denoiser.ckpt        conditional noise predictor (+ latent normalization,
                         schedule fingerprint, RVQ stage count)

Denoiser checkpoints are bitrate-specific: they record the RVQ stage count
they were conditioned on and decoding refuses token files with a different
stage count.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import audio, codec, denoiser as dn, diffusion, metrics, quantizer
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import AEConfig, ConditionUpsampler, ConvAutoencoder, pad_to_multiple
from .config import PipelineConfig
from .schedule import NoiseSchedule, linear_schedule

CONT_AE = "continuous_ae.ckpt"
DISC_AE = "discrete_ae.ckpt"
RVQ_CKPT = "rvq.ckpt"
UPSAMPLER_CKPT = "upsampler.ckpt"
DENOISER_CKPT = "denoiser.ckpt"


class MissingModelError(RuntimeError):
    pass


# -- dataset helpers ----------------------------------------------------------

def load_wav_dir(path, sample_rate: int):
    """All *.wav clips in a directory, sorted by name."""
    files = sorted(Path(path).glob("*.wav"))
    if not files:
        raise FileNotFoundError(f"no .wav files in {path}")
    clips = []
    for f in files:
        x, rate = audio.read_wav(f)
        if rate != sample_rate:
            raise ValueError(f"{f}: sample rate {rate}, expected {sample_rate}")
        clips.append(x)
    return clips, files


def prepare_clips(clips, n_samples: int, hop: int):
    """Crop/zero-pad every clip to n_samples (must divide evenly by hop)."""
    if n_samples % hop:
        raise ValueError(f"crop length {n_samples} not a multiple of hop {hop}")
    out = []
    for x in clips:
        x = np.asarray(x, dtype=np.float64)[:n_samples]
        if len(x) < n_samples:
            x = np.pad(x, (0, n_samples - len(x)))
        out.append(x)
    return out


# -- checkpoint round trips ---------------------------------------------------

def save_autoencoder(path, model: ConvAutoencoder, extra=None):
    save_checkpoint(path, "autoencoder", model.spec(), model.get_params(), extra)


def load_autoencoder(path) -> tuple[ConvAutoencoder, dict]:
    _, spec, params, extra = load_checkpoint(path, "autoencoder")
    model = ConvAutoencoder(AEConfig(
        strides=tuple(spec["strides"]), latent_dim=spec["latent_dim"],
        base_channels=spec["base_channels"], kernel=spec["kernel"],
        seed=spec["seed"]))
    model.set_params(params)
    return model, extra


def save_rvq(path, q: quantizer.RVQ, frame_rate: float):
    params = np.concatenate([cb.centroids.ravel() for cb in q.stages])
    spec = {"stages": q.n_stages, "K": q.K, "dim": q.dim}
    save_checkpoint(path, "rvq", spec, params, {"frame_rate": frame_rate})


def load_rvq(path) -> tuple[quantizer.RVQ, dict]:
    _, spec, params, extra = load_checkpoint(path, "rvq")
    K, dim = spec["K"], spec["dim"]
    books = []
    for i in range(spec["stages"]):
        cent = params[i * K * dim : (i + 1) * K * dim].reshape(K, dim)
        books.append(quantizer.Codebook(centroids=cent))
    return quantizer.RVQ(stages=books), extra


def save_upsampler(path, ups: ConditionUpsampler):
    save_checkpoint(path, "upsampler", ups.spec(), ups.get_params())


def load_upsampler(path) -> ConditionUpsampler:
    _, spec, params, _ = load_checkpoint(path, "upsampler")
    ups = ConditionUpsampler(**spec)
    ups.set_params(params)
    return ups


PILOT_CHANNELS = 2


def add_pilot_channels(z: np.ndarray) -> np.ndarray:
    """Append constant +1 / -1 pilot rows to a (channels, frames) latent map.

    The condition pathway rescales every frame of the upsampled embedding to
    span [-1, 1], which would otherwise erase per-frame amplitude and leave
    the midway infilling branch starting from a gain-distorted state. With
    pilot rows pinned at the extremes — and core channels normalized to stay
    inside them — a well-predicted condition passes through the per-frame
    scaling essentially unchanged.
    """
    ones = np.ones((1, z.shape[1]))
    return np.concatenate([z, ones, -ones], axis=0)


def save_denoiser(path, model: dn.ConvDenoiser, schedule: NoiseSchedule,
                  rvq_stages: int, latent_mean, latent_std):
    extra = {
        "schedule_fingerprint": schedule.fingerprint(),
        "rvq_stages": int(rvq_stages),
        "pilot_channels": PILOT_CHANNELS,
        "latent_mean": [float(v) for v in latent_mean],
        "latent_std": [float(v) for v in latent_std],
    }
    save_checkpoint(path, "denoiser", model.spec(), model.get_params(), extra)


def load_denoiser(path) -> tuple[dn.ConvDenoiser, dict]:
    _, spec, params, extra = load_checkpoint(path, "denoiser")
    model = dn.ConvDenoiser(
        spec["latent_channels"], spec["cond_channels"],
        widths=tuple(spec["widths"]), kernel=spec["kernel"], seed=spec["seed"])
    model.set_params(params)
    return model, extra


def _require(model_dir, name):
    p = Path(model_dir) / name
    if not p.exists():
        raise MissingModelError(f"missing model file {p}; train it first")
    return p


# -- training entry points ----------------------------------------------------

def train_ae_cmd(cfg: PipelineConfig, which: str, data_dir, model_dir):
    ae_cfg = {"continuous": cfg.continuous_ae, "discrete": cfg.discrete_ae}.get(which)
    if ae_cfg is None:
        raise ValueError(f"unknown autoencoder path {which!r}")
    clips, _ = load_wav_dir(data_dir, cfg.sample_rate)
    clips = prepare_clips(clips, cfg.crop_samples, ae_cfg.hop)
    model, losses = codec.train_autoencoder(clips, ae_cfg, cfg.train_ae)
    Path(model_dir).mkdir(parents=True, exist_ok=True)
    name = CONT_AE if which == "continuous" else DISC_AE
    save_autoencoder(Path(model_dir) / name,
                     model, {"loss_first": losses[0], "loss_last": losses[-1]})
    return losses


def train_rvq_cmd(cfg: PipelineConfig, data_dir, model_dir):
    model_dir = Path(model_dir)
    disc, _ = load_autoencoder(_require(model_dir, DISC_AE))
    clips, _ = load_wav_dir(data_dir, cfg.sample_rate)
    clips = prepare_clips(clips, cfg.crop_samples, disc.cfg.hop)
    frames = np.concatenate([disc.encode(x).T for x in clips])  # (n, dim)
    q = quantizer.rvq_train(frames, cfg.rvq.stages, cfg.rvq.K,
                            iters=cfg.rvq.iters, seed=cfg.rvq.seed)
    save_rvq(model_dir / RVQ_CKPT, q, cfg.sample_rate / disc.cfg.hop)
    return q


def train_denoiser_cmd(cfg: PipelineConfig, data_dir, model_dir):
    """Train the condition upsampler, then the conditional denoiser.

    Both run on frozen autoencoder latents: the upsampler regresses the
    normalized, pilot-augmented continuous latents from token embeddings; the
    denoiser then learns noise prediction conditioned on the upsampled,
    frame-scaled tokens.
    """
    model_dir = Path(model_dir)
    cont, _ = load_autoencoder(_require(model_dir, CONT_AE))
    disc, _ = load_autoencoder(_require(model_dir, DISC_AE))
    q, _ = load_rvq(_require(model_dir, RVQ_CKPT))
    clips, _ = load_wav_dir(data_dir, cfg.sample_rate)
    clips = prepare_clips(clips, cfg.crop_samples, disc.cfg.hop)

    latents = [cont.encode(x) for x in clips]
    stacked = np.concatenate(latents, axis=1)
    mean = stacked.mean(axis=1)
    # latent_span spreads the per-channel z-score so core channels stay
    # inside the [-1, 1] band pinned by the pilot rows
    std = np.maximum(stacked.std(axis=1), 1e-6) * cfg.denoiser.latent_span
    norm = [add_pilot_channels((z - mean[:, None]) / std[:, None])
            for z in latents]

    factor = cfg.upsample_factor
    embeddings = [quantizer.rvq_decode(q, quantizer.rvq_encode(q, disc.encode(x)))
                  for x in clips]

    if cfg.upsampler.mode == "learned":
        ups, _ = codec.train_upsampler(embeddings, norm, factor,
                                       cfg.train_upsampler,
                                       hidden=cfg.upsampler.hidden,
                                       kernel=cfg.upsampler.kernel)
        save_upsampler(model_dir / UPSAMPLER_CKPT, ups)
        conds = [codec.scale_frames(ups.apply(e)) for e in embeddings]
    else:
        ups = None
        conds = [codec.scale_frames(
                    codec.nearest_upsample(e, factor,
                                           cont.cfg.latent_dim + PILOT_CHANNELS))
                 for e in embeddings]

    sched = linear_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end)
    model, losses = dn.train_denoiser(norm, conds, sched, cfg.train_denoiser,
                                      widths=cfg.denoiser.widths,
                                      kernel=cfg.denoiser.kernel)
    save_denoiser(model_dir / DENOISER_CKPT, model, sched,
                  rvq_stages=q.n_stages, latent_mean=mean, latent_std=std)
    return model, losses


# -- coding -------------------------------------------------------------------

def encode_file(cfg: PipelineConfig, model_dir, in_wav, out_tokens):
    """WAV -> token file. Returns (tokens, bits_per_second)."""
    model_dir = Path(model_dir)
    disc, _ = load_autoencoder(_require(model_dir, DISC_AE))
    q, extra = load_rvq(_require(model_dir, RVQ_CKPT))
    x, rate = audio.read_wav(in_wav)
    if rate != cfg.sample_rate:
        raise ValueError(f"{in_wav}: sample rate {rate}, expected {cfg.sample_rate}")
    xp, _ = pad_to_multiple(x, disc.cfg.hop)
    z = disc.encode(xp)
    frame_rate = cfg.sample_rate / disc.cfg.hop
    tokens = quantizer.rvq_encode(q, z, frame_rate=frame_rate)
    quantizer.write_tokens(out_tokens, tokens)
    return tokens, quantizer.bitrate(q, frame_rate)


def _load_condition(model_dir, tokens, q, factor, latent_dim):
    ups_path = Path(model_dir) / UPSAMPLER_CKPT
    ups = load_upsampler(ups_path) if ups_path.exists() else None
    return codec.upsample_condition(tokens, q, factor, upsampler=ups,
                                    out_channels=latent_dim)


def decode_tokens(cfg: PipelineConfig, model_dir, tokens, mode="diffusion",
                  sampler="midway", sampler_cfg=None, rng=None):
    """Token sequence -> waveform. mode: direct | diffusion."""
    model_dir = Path(model_dir)
    q, _ = load_rvq(_require(model_dir, RVQ_CKPT))
    if tokens.n_stages != q.n_stages:
        raise ValueError(f"token file has {tokens.n_stages} stages, RVQ has {q.n_stages}")
    if mode == "direct":
        disc, _ = load_autoencoder(_require(model_dir, DISC_AE))
        return disc.decode(quantizer.rvq_decode(q, tokens))
    if mode != "diffusion":
        raise ValueError(f"unknown decode mode {mode!r}")

    cont, _ = load_autoencoder(_require(model_dir, CONT_AE))
    model, extra = load_denoiser(_require(model_dir, DENOISER_CKPT))
    if extra["rvq_stages"] != tokens.n_stages:
        raise ValueError(
            f"denoiser was conditioned on {extra['rvq_stages']}-stage tokens, "
            f"token file has {tokens.n_stages} (bitrate-specific model)")
    sched = linear_schedule(cfg.schedule.T, cfg.schedule.beta_start, cfg.schedule.beta_end)
    if extra["schedule_fingerprint"] != sched.fingerprint():
        raise ValueError("denoiser checkpoint was trained with a different noise schedule")

    scfg = sampler_cfg or cfg.sampler
    pilots = int(extra.get("pilot_channels", 0))
    h = _load_condition(model_dir, tokens, q, cfg.upsample_factor,
                        cont.cfg.latent_dim + pilots)
    rng = rng or np.random.default_rng(scfg.seed)
    if sampler == "midway":
        z = diffusion.midway_infilling(sched, model, h, scfg, rng)
    elif sampler == "ddpm":
        z = diffusion.ddpm_sample(sched, model, h, h.shape, rng)
    elif sampler == "ddim":
        z = diffusion.ddim_sample(sched, model, h, h.shape, scfg.steps, rng)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    if pilots:
        z = z[:-pilots]
    mean = np.asarray(extra["latent_mean"])[:, None]
    std = np.asarray(extra["latent_std"])[:, None]
    return cont.decode(z * std + mean)


def decode_file(cfg: PipelineConfig, model_dir, token_file, out_wav,
                mode="diffusion", sampler="midway"):
    tokens = quantizer.read_tokens(token_file)
    t0 = time.perf_counter()
    x = decode_tokens(cfg, model_dir, tokens, mode=mode, sampler=sampler)
    elapsed = time.perf_counter() - t0
    audio.write_wav(out_wav, x, cfg.sample_rate)
    return x, elapsed


# -- evaluation and ablation --------------------------------------------------

def evaluate_pairs(refs, ests, frame=256, hop=128):
    """Per-clip MetricReports plus their means (over equal-length pairs)."""
    reports = [metrics.report(r[: len(e)], e[: len(r)], frame=frame, hop=hop)
               for r, e in zip(refs, ests)]
    mean = {
        "snr_db": float(np.mean([r.snr_db for r in reports])),
        "lsd_db": float(np.mean([r.lsd_db for r in reports])),
        "mse": float(np.mean([r.mse for r in reports])),
    }
    return reports, mean


def ablation_grid(cfg: PipelineConfig, model_dir, tau_list, gamma_list, test_clips,
                  out_csv=None):
    """Mean SNR/LSD for every (tau, gamma) cell over a shared test set.

    Every cell decodes the same token streams with the same seed; rows come
    out in tau-major order. Returns the list of row dicts.
    """
    if not tau_list or not gamma_list:
        raise ValueError("empty ablation grid")
    model_dir = Path(model_dir)
    disc, _ = load_autoencoder(_require(model_dir, DISC_AE))
    q, _ = load_rvq(_require(model_dir, RVQ_CKPT))
    clips = prepare_clips(test_clips, cfg.crop_samples, disc.cfg.hop)
    token_list = [quantizer.rvq_encode(q, disc.encode(x),
                                       frame_rate=cfg.sample_rate / disc.cfg.hop)
                  for x in clips]
    rows = []
    for tau in tau_list:
        for gamma in gamma_list:
            scfg = diffusion.SamplerConfig(tau=int(tau), gamma=float(gamma),
                                           steps=cfg.sampler.steps,
                                           seed=cfg.sampler.seed)
            ests = [decode_tokens(cfg, model_dir, tk, mode="diffusion",
                                  sampler="midway", sampler_cfg=scfg)
                    for tk in token_list]
            _, mean = evaluate_pairs(clips, ests)
            rows.append({"tau": int(tau), "gamma": float(gamma),
                         "snr_db": mean["snr_db"], "lsd_db": mean["lsd_db"]})
    if out_csv is not None:
        write_csv(out_csv, rows, ["tau", "gamma", "snr_db", "lsd_db"])
    return rows


def write_csv(path, rows, fieldnames):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in fieldnames})


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
