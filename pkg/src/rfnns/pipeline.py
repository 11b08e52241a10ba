"""End-to-end sender/receiver protocol.

embed:    cover (keyed or external) -> texture mask -> fixed decoder ->
          optimized perturbation -> 8-bit stego + manifest
extract:  regenerate cover and mask from keys, diff against the stego,
          decode the masked perturbation back into the secret image.

The manifest is a flat UTF-8 ``key = value`` file holding everything the
receiver needs besides the key material itself; the block mask is recomputed
from the regenerated cover rather than transmitted (determinism guarantees
equality).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .attacks import AttackSpec, AttackSuite, apply_exact
from .decoder import PROFILES, CapacityProfile, build_decoder, forward
from .image_core import (ImageTensor, image_from_array, quality_report,
                         quantize8)
from .keyed_rand import (GENERATOR_VERSION, KeyMaterial, cover_digest,
                         generate_cover, load_external_cover)
from .rspg import LossConfig, Schedule, optimize_perturbation
from .texture import BlockGrid, BlockMask, select_blocks

MANIFEST_VERSION = "rfnns-manifest-v1"


class VerificationError(RuntimeError):
    """Data inconsistent with the manifest (hash or config mismatch)."""


@dataclass(frozen=True)
class EmbedConfig:
    keys: KeyMaterial
    profile: CapacityProfile
    block_size: int = 8
    threshold: float = 4.5
    loss: LossConfig = field(default_factory=LossConfig)
    schedule: Schedule = field(default_factory=Schedule)
    external_cover: Optional[str] = None  # path; None means keyed generation
    disable_localization: bool = False
    hash_only_keys: bool = False

    def __post_init__(self):
        if self.profile.cover_side % self.block_size:
            raise ValueError("profile dimensions must be divisible by block size")


@dataclass(frozen=True)
class Manifest:
    fields: dict

    def get(self, key: str) -> str:
        if key not in self.fields:
            raise VerificationError(f"manifest is missing key {key!r}")
        return self.fields[key]


def _sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def stego_digest(img: ImageTensor) -> str:
    q = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    return _sha256_hex(q.tobytes())


def _mask_digest(mask: BlockMask) -> str:
    return _sha256_hex(np.ascontiguousarray(mask.selected).tobytes())


def _key_repr(value, hash_only: bool) -> str:
    if hash_only:
        return "sha256:" + _sha256_hex(str(value).encode("utf-8"))
    return str(value)


def _obtain_cover(cfg: EmbedConfig) -> tuple[ImageTensor, dict]:
    side = cfg.profile.cover_side
    if cfg.external_cover is not None:
        cover, digest = load_external_cover(cfg.external_cover)
        if (cover.height, cover.width, cover.channels) != (side, side, 3):
            raise ValueError(
                f"external cover must be {side}x{side} RGB for this profile")
        src = {"cover_source": "external", "cover_hash": digest}
    else:
        cover = generate_cover(cfg.keys, side, side, cfg.block_size)
        src = {
            "cover_source": "keyed",
            "generator_version": GENERATOR_VERSION,
            "k_c": _key_repr(cfg.keys.k_c, cfg.hash_only_keys),
            "prompt": _key_repr(cfg.keys.prompt, cfg.hash_only_keys),
            "cover_hash": cover_digest(cover),
        }
    return cover, src


def _select_mask(cover: ImageTensor, cfg: EmbedConfig) -> BlockMask:
    cmap, mask = select_blocks(cover, cfg.block_size, cfg.threshold)
    if cfg.disable_localization:
        selected = np.ones_like(mask.selected, dtype=bool)
        selected.setflags(write=False)
        mask = BlockMask(grid=mask.grid, selected=selected)
    return mask


def embed(secret: ImageTensor, cfg: EmbedConfig,
          plugin=None) -> tuple[ImageTensor, Manifest, list]:
    """Embed the secret; returns (8-bit stego, manifest, loss trace)."""
    p = cfg.profile
    if (secret.height, secret.width, secret.channels) != (p.secret_side,
                                                          p.secret_side, 3):
        raise ValueError(
            f"secret must be {p.secret_side}x{p.secret_side} RGB "
            f"for profile {p.name!r}")

    cover, src_fields = _obtain_cover(cfg)
    mask = _select_mask(cover, cfg)
    if mask.num_selected() == 0:
        raise ValueError(
            "no block reaches the texture threshold; the cover is too smooth "
            f"for T={cfg.threshold} (try lowering the threshold)")

    dec = build_decoder(cfg.keys.k_w, p)
    delta, trace = optimize_perturbation(
        cover.data, secret.data, mask, dec, cfg.loss, cfg.schedule,
        plugin=plugin)

    stego = image_from_array(quantize8(np.clip(cover.data + delta, 0.0, 1.0)))

    suite = ""
    if cfg.loss.suite is not None:
        suite = ";".join(f"{s.kind}:{s.param}:{s.noise_seed}"
                         for s in cfg.loss.suite.specs)
    fields = {
        "version": MANIFEST_VERSION,
        **src_fields,
        "k_w": _key_repr(cfg.keys.k_w, cfg.hash_only_keys),
        "profile_name": p.name,
        "cover_side": str(p.cover_side),
        "secret_side": str(p.secret_side),
        "channel_width": str(p.channel_width),
        "bpp": repr(p.bpp),
        "block_size": str(cfg.block_size),
        "threshold": repr(cfg.threshold),
        "disable_localization": str(cfg.disable_localization),
        "alpha": repr(cfg.loss.alpha),
        "beta": repr(cfg.loss.beta),
        "gamma": repr(cfg.loss.gamma),
        "Y": repr(cfg.loss.Y),
        "mu": repr(cfg.loss.mu),
        "robust": str(cfg.loss.robust),
        "suite": suite,
        "iterations": str(cfg.schedule.iterations),
        "lr0": repr(cfg.schedule.lr0),
        "halving_period": str(cfg.schedule.halving_period),
        "steganalysis_start": str(cfg.schedule.steganalysis_start),
        "mask_digest": _mask_digest(mask),
        "stego_hash": stego_digest(stego),
    }
    return stego, Manifest(fields=fields), trace


def save_manifest(manifest: Manifest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for k, v in manifest.fields.items():
            f.write(f"{k} = {v}\n")


def load_manifest(path: str) -> Manifest:
    fields = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed manifest line: {line!r}")
            k, v = line.split("=", 1)
            fields[k.strip()] = v.strip()
    return Manifest(fields=fields)


def extract(stego: ImageTensor, manifest: Manifest, keys: KeyMaterial,
            external_cover: Optional[str] = None,
            denoise: bool = False) -> ImageTensor:
    """Recover the secret image from a stego image plus manifest and keys."""
    if manifest.get("version") != MANIFEST_VERSION:
        raise VerificationError(
            f"unsupported manifest version {manifest.get('version')!r}")
    if stego_digest(stego) != manifest.get("stego_hash"):
        raise VerificationError("stego content hash does not match manifest")

    profile = CapacityProfile(
        name=manifest.get("profile_name"),
        cover_side=int(manifest.get("cover_side")),
        secret_side=int(manifest.get("secret_side")),
        channel_width=int(manifest.get("channel_width")))
    block_size = int(manifest.get("block_size"))
    threshold = float(manifest.get("threshold"))

    if manifest.get("cover_source") == "external":
        if external_cover is None:
            raise VerificationError(
                "manifest references an external cover; supply its path")
        cover, digest = load_external_cover(external_cover)
        if digest != manifest.get("cover_hash"):
            raise VerificationError("external cover hash mismatch")
    else:
        cover = generate_cover(keys, profile.cover_side, profile.cover_side,
                               block_size)
        if cover_digest(cover) != manifest.get("cover_hash"):
            raise VerificationError(
                "regenerated cover does not match manifest (wrong k_c or prompt?)")

    _, mask = select_blocks(cover, block_size, threshold)
    if manifest.get("disable_localization") == "True":
        selected = np.ones_like(mask.selected, dtype=bool)
        selected.setflags(write=False)
        mask = BlockMask(grid=mask.grid, selected=selected)
    if _mask_digest(mask) != manifest.get("mask_digest"):
        raise VerificationError("recomputed block mask digest mismatch")

    # the optimizer's decoder branches use the same quantized-cover base, so
    # with an intact stego this difference is bit-identical to the sender's
    pix3 = mask.pixel_mask()[:, :, None].astype(np.float64)
    delta_prime = (stego.data - quantize8(cover.data)) * pix3
    dec = build_decoder(keys.k_w, profile)
    recovered, _ = forward(dec, delta_prime)
    if denoise:
        recovered = _box_blur3(recovered)
    return image_from_array(np.clip(recovered, 0.0, 1.0))


def _box_blur3(x: np.ndarray) -> np.ndarray:
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            out += xp[dy:dy + x.shape[0], dx:dx + x.shape[1]]
    return out / 9.0


# ---------------------------------------------------------- evaluation ----

EVAL_CSV_HEADER = ("attack", "param", "trial", "stego_psnr", "stego_ssim",
                   "secret_psnr", "secret_ssim", "secret_mse")


def generate_secret(seed: int, side: int) -> ImageTensor:
    """Procedural stand-in secret image, deterministic in the seed."""
    keys = KeyMaterial(k_c=seed, prompt="secret", k_w=0)
    gen_side = max(side, 32)  # the generator needs room for its noise octaves
    img = generate_cover(keys, gen_side, gen_side, block_size=8)
    if gen_side == side:
        return img
    return image_from_array(np.ascontiguousarray(img.data[:side, :side]))


def evaluate(cfg: EmbedConfig, eval_attacks: list[AttackSpec],
             n_trials: int = 1, denoise: bool = False) -> list[dict]:
    """Embed/attack/extract rounds; one result row per (attack, trial).

    "Known" vs "unknown" attack evaluation is expressed by whether an eval
    attack also appears in cfg.loss.suite (the training suite).
    """
    rows = []
    for trial in range(n_trials):
        trial_keys = replace(cfg.keys, k_c=cfg.keys.k_c + trial)
        trial_cfg = replace(cfg, keys=trial_keys)
        secret = generate_secret(1000 + trial, cfg.profile.secret_side)
        cover, _ = _obtain_cover(trial_cfg)
        stego, manifest, _ = embed(secret, trial_cfg)
        for spec in eval_attacks:
            attacked = image_from_array(
                apply_exact(spec, stego.data))
            # the channel may alter bytes; extraction integrity-checks the
            # hash, so evaluation bypasses it by patching the expected hash
            m = Manifest(fields={**manifest.fields,
                                 "stego_hash": stego_digest(attacked)})
            recovered = extract(attacked, m, trial_keys, denoise=denoise)
            sq = quality_report(cover, stego)
            rq = quality_report(secret, recovered)
            rows.append({
                "attack": spec.kind,
                "param": spec.param,
                "trial": trial,
                "stego_psnr": sq.psnr,
                "stego_ssim": sq.ssim,
                "secret_psnr": rq.psnr,
                "secret_ssim": rq.ssim,
                "secret_mse": rq.mse,
            })
    rows.sort(key=lambda r: (r["attack"], r["param"], r["trial"]))
    return rows
