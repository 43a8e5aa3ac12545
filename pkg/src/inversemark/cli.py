"""Command-line interface: embed, extract, attack, evaluate, keygen.

Exit codes: 0 success, 1 invalid argument, 2 numeric failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .codec import AnalyticCodec
from .core import (PipelineConfig, config_to_toml, dump_toml, load_image,
                   load_pipeline_config, save_image, watermark_bit_length)
from .distortions import apply_distortion
from .denoiser import ZeroToyPredictor, conditioned_linear_predictor
from .errors import InvalidArgumentError, InversemarkError
from .gshade import load_watermark_key, random_watermark_key, save_watermark_key
from .harness import default_distortions, evaluate, ingest
from .pipeline import (GaussianShadingInjector, TreeRingInjector, embed, extract,
                       resolve_schedule)
from .report import write_reports
from .scheduler import schedule_from_table
from .treering import load_treering_key, save_treering_key, tr_make_key


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidArgumentError(message)


def _add_common(parser):
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--model", default="linear",
                        help="zero | linear | bridge:<host:port>")
    parser.add_argument("--codec", default="analytic",
                        help="analytic | bridge:<host:port>")
    parser.add_argument("--injector", choices=("gshade", "treering"), default="gshade")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--s-low", type=int, dest="s_low")
    parser.add_argument("--f-s", type=float, dest="f_s")
    parser.add_argument("--steps", type=int, help="inference steps")
    parser.add_argument("--invert-steps", type=int, dest="invert_steps")
    parser.add_argument("--resolution", type=int)


def build_parser():
    parser = _Parser(prog="inversemark",
                     description="Diffusion-inversion image watermarking toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a key file")
    _add_common(p)
    p.add_argument("--key", required=True, help="key file to write")
    p.add_argument("--f-c", type=int, dest="f_c", default=2)
    p.add_argument("--f-hw", type=int, dest="f_hw", default=32)
    p.add_argument("--radius", type=int, default=30)
    p.add_argument("--tau", type=float, default=0.9)

    p = sub.add_parser("embed", help="embed a watermark into a cover image")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--key", required=True)

    p = sub.add_parser("extract", help="extract a watermark from an image")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--key", required=True)

    p = sub.add_parser("attack", help="apply a distortion to an image")
    _add_common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--op", required=True,
                   choices=("jpeg", "crop", "blur", "noise", "brightness", "rotate"))
    p.add_argument("--q", type=int, help="jpeg quality")
    p.add_argument("--ratio", type=float, help="crop ratio")
    p.add_argument("--r", type=float, help="blur radius")
    p.add_argument("--std", type=float, help="noise std")
    p.add_argument("--f", type=float, help="brightness factor")
    p.add_argument("--deg", type=float, help="rotation degrees")

    p = sub.add_parser("evaluate", help="run the robustness matrix over a dataset")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--images", type=int, help="cap on the number of images")
    p.add_argument("--workers", type=int, default=4)
    return parser


def assemble_config(args) -> PipelineConfig:
    cfg = load_pipeline_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.s_low is not None:
        overrides["s_low"] = args.s_low
    if args.f_s is not None:
        overrides["f_s"] = args.f_s
    if args.steps is not None:
        overrides["infer_steps"] = args.steps
    if args.invert_steps is not None:
        overrides["invert_steps"] = args.invert_steps
    if args.resolution is not None:
        overrides["resolution"] = args.resolution
    if overrides:
        cfg = PipelineConfig(s_low=overrides.get("s_low", cfg.s_low),
                             f_s=overrides.get("f_s", cfg.f_s),
                             infer_steps=overrides.get("infer_steps", cfg.infer_steps),
                             invert_steps=overrides.get("invert_steps", cfg.invert_steps),
                             resolution=overrides.get("resolution", cfg.resolution),
                             schedule=cfg.schedule)
    return cfg


def build_codec(spec: str):
    if spec == "analytic":
        return AnalyticCodec()
    if spec.startswith("bridge:"):
        from .bridge import BridgeCodec
        return BridgeCodec(spec[len("bridge:"):])
    raise InvalidArgumentError(f"unknown codec {spec!r}")


def build_model(spec: str, cfg: PipelineConfig, codec):
    """Returns (model, embed_schedule, extract_schedule); bridge models may
    override the local alpha table with the one the server advertises."""
    latent = (codec.c_latent, cfg.s_low, cfg.s_low)
    cond = (3, cfg.s_low, cfg.s_low)
    if spec == "zero":
        return ZeroToyPredictor(latent, cond), None, None
    if spec == "linear":
        sched = resolve_schedule(cfg, cfg.infer_steps)
        return conditioned_linear_predictor(sched, codec, latent, cond, scale=0.1), None, None
    if spec.startswith("bridge:"):
        from .bridge import BridgePredictor
        model = BridgePredictor(spec[len("bridge:"):], latent, cond,
                                expected_c_latent=codec.c_latent)
        if model.alpha_bar is not None:
            return (model, schedule_from_table(model.alpha_bar, cfg.infer_steps),
                    schedule_from_table(model.alpha_bar, cfg.invert_steps))
        return model, None, None
    raise InvalidArgumentError(f"unknown model {spec!r}")


def build_injector(kind: str, key_path, seed: int):
    if kind == "gshade":
        return GaussianShadingInjector(load_watermark_key(key_path), seed=seed)
    return TreeRingInjector(load_treering_key(key_path), seed=seed)


def _outdir(args) -> Path:
    out = Path(args.out if args.out else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_keygen(args) -> int:
    cfg = assemble_config(args)
    codec = build_codec(args.codec)
    rng = np.random.default_rng(args.seed)
    if args.injector == "gshade":
        length = watermark_bit_length(codec.c_latent, cfg.s_low, cfg.s_low,
                                      args.f_c, args.f_hw)
        key = random_watermark_key(rng, args.f_c, args.f_hw, length)
        save_watermark_key(key, args.key)
        print(f"wrote {args.key}: {length}-bit payload, f_c={args.f_c}, f_hw={args.f_hw}")
    else:
        key = tr_make_key(args.radius, seed=args.seed,
                          grid_shape=(cfg.s_low, cfg.s_low), threshold=args.tau)
        save_treering_key(key, args.key)
        print(f"wrote {args.key}: radius={args.radius}, tau={args.tau}, "
              f"grid={cfg.s_low}x{cfg.s_low}")
    return 0


def cmd_embed(args) -> int:
    cfg = assemble_config(args)
    codec = build_codec(args.codec)
    model, sched_embed, _ = build_model(args.model, cfg, codec)
    injector = build_injector(args.injector, args.key, args.seed)
    cover = load_image(args.image)
    result = embed(cover, injector, cfg, model, codec, sched=sched_embed)
    out = _outdir(args)
    save_image(result.watermarked, out / "watermarked.png")
    (out / "embed_report.toml").write_text(dump_toml({
        "embed": {"source": str(args.image), "psnr": result.psnr,
                  "ssim": result.ssim, "seed": args.seed,
                  "injector": args.injector},
    }) + config_to_toml(cfg))
    print(f"watermarked image: {out / 'watermarked.png'}")
    print(f"fidelity: PSNR {result.psnr:.4f} dB, SSIM {result.ssim:.4f}")
    return 0


def cmd_extract(args) -> int:
    cfg = assemble_config(args)
    codec = build_codec(args.codec)
    model, _, sched_extract = build_model(args.model, cfg, codec)
    injector = build_injector(args.injector, args.key, args.seed)
    image = load_image(args.image)
    result = extract(image, injector, cfg, model, codec, sched=sched_extract)
    payload = {}
    if result.bits is not None:
        payload = {"bits": result.bits.to_hex(), "bit_length": len(result.bits),
                   "accuracy": result.accuracy}
        print(f"recovered bits: {result.bits.to_hex()} "
              f"(accuracy vs key payload: {result.accuracy:.4f})")
    else:
        rep = result.report
        payload = {"mu": rep.mu, "sigma2": rep.sigma2, "p_value": rep.p_value,
                   "detected": rep.detected, "threshold": rep.threshold}
        print(f"detection: p={rep.p_value:.6g} (tau={rep.threshold}) -> "
              f"{'DETECTED' if rep.detected else 'not detected'}")
    if args.out:
        out = _outdir(args)
        (out / "extract_report.toml").write_text(dump_toml({"extract": payload}))
    return 0


_ATTACK_FLAG = {"jpeg": ("q", "quality"), "crop": ("ratio", "ratio"),
                "blur": ("r", "radius"), "noise": ("std", "std"),
                "brightness": ("f", "factor"), "rotate": ("deg", "degrees")}


def cmd_attack(args) -> int:
    image = load_image(args.image)
    flag, param = _ATTACK_FLAG[args.op]
    value = getattr(args, flag)
    params = {param: value} if value is not None else {}
    attacked = apply_distortion(args.op, image, seed=args.seed, **params)
    out = _outdir(args)
    path = out / f"attacked_{args.op}.png"
    save_image(attacked, path)
    print(f"wrote {path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = assemble_config(args)
    codec = build_codec(args.codec)
    model, sched_embed, _ = build_model(args.model, cfg, codec)
    images = ingest(args.dataset, cfg.resolution)
    if args.images:
        images = images[:args.images]
    distortions = default_distortions(args.injector)
    manifest = evaluate(images, cfg, model, codec, distortions, seed=args.seed,
                        injector_kind=args.injector, workers=args.workers)
    manifest.dataset = str(args.dataset)
    out = _outdir(args)
    for path in write_reports(manifest, out):
        print(f"wrote {path}")
    acc_cols = [c for c in manifest.columns if c not in ("psnr", "ssim")]
    avg = sum(manifest.summary[c] for c in acc_cols) / len(acc_cols)
    print(f"summary: PSNR {manifest.summary['psnr']:.4f} dB, "
          f"SSIM {manifest.summary['ssim']:.4f}, average "
          f"{manifest.metric_label} {avg:.4f}")
    return 0


_COMMANDS = {"keygen": cmd_keygen, "embed": cmd_embed, "extract": cmd_extract,
             "attack": cmd_attack, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except InversemarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
