"""Command-line surface: cover generation, texture analysis, embed/extract,
channel attacks, robustness evaluation, and ablation runs.

Exit codes: 0 success, 1 usage error, 2 data/verification error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .attacks import ATTACK_KINDS, AttackSpec, AttackSuite, apply_exact
from .decoder import PROFILES, CapacityProfile
from .image_core import image_from_array, load_image, save_image
from .keyed_rand import KeyMaterial, generate_cover
from .pipeline import (EVAL_CSV_HEADER, EmbedConfig, VerificationError,
                       embed, evaluate, extract, load_manifest, save_manifest)
from .rspg import LossConfig, Schedule
from .texture import select_blocks


class UsageError(Exception):
    pass


# §-free restatement: every knob defaults to the published operating point.
CONFIG_DEFAULTS = {
    "kc": 0,
    "kw": 0,
    "prompt": "Campus",
    "profile": "desk",
    "block_size": 8,
    "threshold": 4.5,
    "alpha": 1.0,
    "beta": None,        # derived from robust unless set
    "gamma": 1e-5,
    "Y": 0.001,
    "mu": 0.2,
    "iterations": 1500,
    "lr0": 10.0**-1.25,
    "halving_period": 500,
    "steganalysis_start": 1400,
    "robust": False,
    "suite": "",
    "attack_pick": "round_robin",
    "trials": 1,
    "disable_localization": False,
    "disable_rspg": False,
    "disable_steganalysis_term": False,
}

_INT_KEYS = {"kc", "kw", "block_size", "iterations", "halving_period",
             "steganalysis_start", "trials"}
_FLOAT_KEYS = {"threshold", "alpha", "beta", "gamma", "Y", "mu", "lr0"}
_BOOL_KEYS = {"robust", "disable_localization", "disable_rspg",
              "disable_steganalysis_term"}
_POSITIVE_KEYS = {"block_size", "iterations", "halving_period", "mu", "lr0",
                  "trials"}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(CONFIG_DEFAULTS))

    def keys_material(self) -> KeyMaterial:
        v = self.values
        return KeyMaterial(k_c=v["kc"], prompt=v["prompt"], k_w=v["kw"])

    def profile(self) -> CapacityProfile:
        name = self.values["profile"]
        if name not in PROFILES:
            raise UsageError(f"unknown profile {name!r}; "
                             f"choose from {sorted(PROFILES)}")
        return PROFILES[name]

    def suite(self) -> Optional[AttackSuite]:
        text = self.values["suite"]
        if not text:
            return None
        return AttackSuite(specs=tuple(parse_attack(s)
                                       for s in text.split(";") if s))

    def loss_config(self) -> LossConfig:
        v = self.values
        robust = bool(v["robust"]) and not v["disable_rspg"]
        beta = v["beta"]
        if beta is None:
            beta = 0.5 if robust else 3.0
        gamma = 0.0 if v["disable_steganalysis_term"] else v["gamma"]
        if v["attack_pick"] not in ("round_robin", "worst"):
            raise UsageError(f"unknown attack_pick {v['attack_pick']!r}")
        return LossConfig(alpha=v["alpha"], beta=beta, gamma=gamma,
                          Y=v["Y"], mu=v["mu"], robust=robust,
                          suite=self.suite() if robust else None,
                          attack_pick=v["attack_pick"])

    def schedule(self) -> Schedule:
        v = self.values
        return Schedule(iterations=v["iterations"], lr0=v["lr0"],
                        halving_period=v["halving_period"],
                        steganalysis_start=v["steganalysis_start"])

    def embed_config(self, external_cover: Optional[str] = None) -> EmbedConfig:
        return EmbedConfig(
            keys=self.keys_material(), profile=self.profile(),
            block_size=self.values["block_size"],
            threshold=self.values["threshold"],
            loss=self.loss_config(), schedule=self.schedule(),
            external_cover=external_cover,
            disable_localization=self.values["disable_localization"])


def parse_attack(text: str) -> AttackSpec:
    parts = text.strip().split(":")
    if not parts[0]:
        raise UsageError(f"malformed attack spec {text!r}")
    kind = parts[0]
    if kind not in ATTACK_KINDS:
        raise UsageError(f"unknown attack kind {kind!r}")
    try:
        param = float(parts[1]) if len(parts) > 1 else 0.0
        seed = int(parts[2]) if len(parts) > 2 else 0
    except ValueError as e:
        raise UsageError(f"malformed attack spec {text!r}: {e}") from None
    return AttackSpec(kind=kind, param=param, noise_seed=seed)


def parse_config(path: str) -> RunConfig:
    """Flat key = value config; unknown keys are fatal, absent keys default."""
    cfg = RunConfig()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            cfg.values[key] = _coerce(key, value)
    return cfg


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            out = int(value)
        elif key in _FLOAT_KEYS:
            out = float(value)
        elif key in _BOOL_KEYS:
            if value.lower() not in ("true", "false", "0", "1"):
                raise ValueError("expected a boolean")
            out = value.lower() in ("true", "1")
        else:
            return value
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {value!r}") from None
    if key in _POSITIVE_KEYS and out <= 0:
        raise UsageError(f"config key {key!r} must be positive, got {value}")
    if key in ("iterations", "trials", "block_size") and out <= 0:
        raise UsageError(f"config key {key!r} out of range: {value}")
    return out


def _load_run_config(args) -> RunConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "kc": getattr(args, "kc", None),
        "kw": getattr(args, "kw", None),
        "prompt": getattr(args, "prompt", None),
        "profile": getattr(args, "profile", None),
        "threshold": getattr(args, "threshold", None),
        "iterations": getattr(args, "iterations", None),
        "suite": getattr(args, "suite", None),
        "attack_pick": getattr(args, "attack_pick", None),
        "trials": getattr(args, "trials", None),
    }
    for key, val in overrides.items():
        if val is not None:
            cfg.values[key] = val
    for flag in ("robust", "disable_localization", "disable_rspg",
                 "disable_steganalysis_term"):
        if getattr(args, flag, False):
            cfg.values[flag] = True
    return cfg


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


# ------------------------------------------------------------- commands ----

def _cmd_gen_cover(args) -> int:
    cfg = _load_run_config(args)
    side = args.size
    keys = cfg.keys_material()
    cover = generate_cover(keys, side, side, cfg.values["block_size"])
    save_image(cover, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_analyze_texture(args) -> int:
    cfg = _load_run_config(args)
    img = load_image(args.image)
    cmap, mask = select_blocks(img, cfg.values["block_size"],
                               cfg.values["threshold"])
    rows = [(r, c, f"{cmap.values[r, c]:.6f}", int(mask.selected[r, c]))
            for r in range(cmap.grid.rows) for c in range(cmap.grid.cols)]
    _write_csv(args.output, ("block_row", "block_col", "O", "selected"), rows)
    if args.mask_png:
        save_image(image_from_array(
            mask.pixel_mask().astype(np.float64)[:, :, None]), args.mask_png)
    print(f"{mask.num_selected()}/{mask.selected.size} blocks selected")
    return 0


def _cmd_embed(args) -> int:
    cfg = _load_run_config(args)
    secret = load_image(args.secret)
    ecfg = cfg.embed_config(external_cover=args.external_cover)
    stego, manifest, trace = embed(secret, ecfg)
    os.makedirs(args.output, exist_ok=True)
    save_image(stego, os.path.join(args.output, "stego.png"))
    save_manifest(manifest, os.path.join(args.output, "manifest.txt"))
    if args.trace_csv:
        _write_csv(args.trace_csv,
                   ("iteration", "L1", "L2", "L3", "L4", "L", "lr"), trace)
    print(f"wrote {args.output}/stego.png and manifest.txt")
    return 0


def _cmd_extract(args) -> int:
    cfg = _load_run_config(args)
    stego = load_image(args.stego)
    manifest = load_manifest(args.manifest)
    recovered = extract(stego, manifest, cfg.keys_material(),
                        external_cover=args.external_cover,
                        denoise=args.denoise)
    save_image(recovered, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_attack(args) -> int:
    spec = AttackSpec(kind=args.kind, param=args.param, noise_seed=args.seed)
    img = load_image(args.input)
    save_image(image_from_array(apply_exact(spec, img.data)), args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_run_config(args)
    eval_attacks = [parse_attack(s) for s in args.attacks.split(";") if s]
    if not eval_attacks:
        raise UsageError("no evaluation attacks given")
    rows = evaluate(cfg.embed_config(), eval_attacks,
                    n_trials=cfg.values["trials"], denoise=args.denoise)
    _write_csv(args.output, EVAL_CSV_HEADER,
               [[r[k] for k in EVAL_CSV_HEADER] for r in rows])
    print(f"wrote {args.output} ({len(rows)} rows)")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_run_config(args)
    eval_attacks = [parse_attack(s) for s in args.attacks.split(";") if s]
    arms = (("baseline", {}),
            ("no_localization", {"disable_localization": True}),
            ("no_rspg", {"disable_rspg": True}),
            ("no_steganalysis_term", {"disable_steganalysis_term": True}))
    out_rows = []
    for arm, flags in arms:
        arm_cfg = RunConfig(values={**cfg.values, **flags})
        rows = evaluate(arm_cfg.embed_config(), eval_attacks,
                        n_trials=cfg.values["trials"])
        for r in rows:
            out_rows.append([arm] + [r[k] for k in EVAL_CSV_HEADER])
    _write_csv(args.output, ("arm",) + EVAL_CSV_HEADER, out_rows)
    print(f"wrote {args.output} ({len(out_rows)} rows)")
    return 0


# --------------------------------------------------------------- parser ----

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_key_flags(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--kc", type=int, help="cover key")
    p.add_argument("--kw", type=int, help="decoder weight key")
    p.add_argument("--prompt", help="shared prompt string")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfnns",
                     description="Robust fixed-network image steganography")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-cover", help="generate a keyed procedural cover")
    _add_key_flags(p)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_gen_cover)

    p = sub.add_parser("analyze-texture", help="per-block texture complexity")
    _add_key_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--mask-png")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_analyze_texture)

    p = sub.add_parser("embed", help="embed a secret image")
    _add_key_flags(p)
    p.add_argument("--secret", required=True)
    p.add_argument("--profile")
    p.add_argument("--iterations", type=int)
    p.add_argument("--robust", action="store_true")
    p.add_argument("--suite", help="attack suite, e.g. jpeg:80;contrast:0.7")
    p.add_argument("--attack-pick", dest="attack_pick",
                   choices=("round_robin", "worst"),
                   help="per-iteration attack selection in robust mode")
    p.add_argument("--external-cover")
    p.add_argument("--disable-localization", dest="disable_localization",
                   action="store_true")
    p.add_argument("--disable-rspg", dest="disable_rspg", action="store_true")
    p.add_argument("--disable-steganalysis-term",
                   dest="disable_steganalysis_term", action="store_true")
    p.add_argument("--trace-csv")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("extract", help="recover the secret from a stego image")
    _add_key_flags(p)
    p.add_argument("--stego", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--external-cover")
    p.add_argument("--denoise", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("attack", help="apply a channel attack to an image")
    p.add_argument("--kind", required=True, choices=ATTACK_KINDS)
    p.add_argument("--param", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("evaluate", help="embed/attack/extract benchmark")
    _add_key_flags(p)
    p.add_argument("--profile")
    p.add_argument("--iterations", type=int)
    p.add_argument("--robust", action="store_true")
    p.add_argument("--suite", help="training attack suite")
    p.add_argument("--attacks", required=True, help="evaluation attacks")
    p.add_argument("--trials", type=int)
    p.add_argument("--denoise", action="store_true")
    p.add_argument("-o", "--output", required=True, help="CSV path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation arms")
    _add_key_flags(p)
    p.add_argument("--profile")
    p.add_argument("--iterations", type=int)
    p.add_argument("--robust", action="store_true")
    p.add_argument("--suite")
    p.add_argument("--attacks", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_ablate)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (VerificationError, ValueError, IOError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
