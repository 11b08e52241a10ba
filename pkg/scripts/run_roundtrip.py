#!/usr/bin/env python3
"""No-attack round trip at desk scale: embed, extract, report quality.

Usage: python3 scripts/run_roundtrip.py [--kc N] [--kw N] [--iterations N]
"""

import argparse
import time

from rfnns.decoder import PROFILES
from rfnns.image_core import psnr, ssim
from rfnns.keyed_rand import KeyMaterial, generate_cover
from rfnns.pipeline import EmbedConfig, embed, extract, generate_secret
from rfnns.rspg import Schedule


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kc", type=int, default=0)
    ap.add_argument("--kw", type=int, default=0)
    ap.add_argument("--prompt", default="Campus")
    ap.add_argument("--profile", default="desk", choices=sorted(PROFILES))
    ap.add_argument("--secret-seed", type=int, default=42)
    ap.add_argument("--iterations", type=int, default=1500)
    args = ap.parse_args()

    keys = KeyMaterial(k_c=args.kc, prompt=args.prompt, k_w=args.kw)
    profile = PROFILES[args.profile]
    secret = generate_secret(args.secret_seed, profile.secret_side)
    cfg = EmbedConfig(keys=keys, profile=profile,
                      schedule=Schedule(iterations=args.iterations))

    t0 = time.time()
    stego, manifest, trace = embed(secret, cfg)
    recovered = extract(stego, manifest, keys)
    elapsed = time.time() - t0

    cover = generate_cover(keys, profile.cover_side, profile.cover_side)
    print(f"profile={profile.name} iterations={args.iterations} "
          f"elapsed={elapsed:.1f}s")
    print(f"stego vs cover:    PSNR {psnr(stego, cover):6.2f} dB   "
          f"SSIM {ssim(stego, cover):.4f}")
    print(f"recovered secret:  PSNR {psnr(recovered, secret):6.2f} dB   "
          f"SSIM {ssim(recovered, secret):.4f}")
    print(f"final losses: L1={trace[-1][1]:.6f} L2={trace[-1][2]:.6f}")


if __name__ == "__main__":
    main()
