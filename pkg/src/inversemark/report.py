"""Report emission: per-image CSV, a summary table, the config snapshot, and
rendered figures, all written side by side in the output directory."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .core import dump_toml
from .errors import IoError
from .harness import RunManifest

PER_IMAGE_CSV = "per_image.csv"
SUMMARY_MD = "summary.md"
CONFIG_SNAPSHOT = "config_snapshot.toml"
ACCURACY_FIGURE = "accuracy_by_distortion.png"
FIDELITY_FIGURE = "fidelity_distribution.png"


def write_reports(manifest: RunManifest, outdir) -> list:
    """Write every report artifact; returns the created paths."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create report directory {out}: {exc}") from exc
    written = [
        _write_csv(manifest, out / PER_IMAGE_CSV),
        _write_summary(manifest, out / SUMMARY_MD),
        _write_config(manifest, out / CONFIG_SNAPSHOT),
        _plot_accuracy(manifest, out / ACCURACY_FIGURE),
        _plot_fidelity(manifest, out / FIDELITY_FIGURE),
    ]
    return written


def _write_csv(manifest: RunManifest, path: Path) -> Path:
    fields = ["index", "file"]
    if manifest.injector_kind == "gshade":
        fields.append("payload")
    fields += manifest.columns
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
            writer.writeheader()
            for rec in manifest.records:
                writer.writerow({k: _format_cell(rec.get(k)) for k in fields})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    return value


def read_per_image_csv(path) -> list:
    """Parse the per-image CSV back into numeric records."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            parsed = {}
            for key, value in rec.items():
                if key in ("file", "payload"):
                    parsed[key] = value
                elif key == "index":
                    parsed[key] = int(value)
                else:
                    parsed[key] = float(value)
            rows.append(parsed)
    return rows


def _write_summary(manifest: RunManifest, path: Path) -> Path:
    label = "Bit accuracy" if manifest.metric_label == "accuracy" else "Detection rate"
    lines = [
        "# Evaluation summary",
        "",
        f"- images: {len(manifest.records)}",
        f"- seed: {manifest.seed}",
        f"- injector: {manifest.injector_kind}",
        f"- fidelity: PSNR {manifest.summary['psnr']:.4f} dB, "
        f"SSIM {manifest.summary['ssim']:.4f}",
        "",
        f"| Channel | {label} |",
        "| --- | --- |",
    ]
    acc_cols = [c for c in manifest.columns if c not in ("psnr", "ssim")]
    for col in acc_cols:
        lines.append(f"| {col} | {manifest.summary[col]:.4f} |")
    average = sum(manifest.summary[c] for c in acc_cols) / len(acc_cols)
    lines.append(f"| Average | {average:.4f} |")
    lines.append("")
    lines.append("Crop cells use the geometry-preserving masked interpretation "
                 "(window kept in place, outside zeroed); they are comparable "
                 "only to runs using the same convention.")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _write_config(manifest: RunManifest, path: Path) -> Path:
    doc = dict(manifest.config)
    doc.setdefault("run", {})
    doc["run"] = {"seed": manifest.seed, "injector": manifest.injector_kind,
                  "images": len(manifest.records)}
    try:
        path.write_text(dump_toml(doc))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _plot_accuracy(manifest: RunManifest, path: Path) -> Path:
    cols = [c for c in manifest.columns if c not in ("psnr", "ssim")]
    values = [manifest.summary[c] for c in cols]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(cols), 3.2))
    ax.bar(range(len(cols)), values, color="#4878b0")
    ax.set_xticks(range(len(cols)))
    ax.set_xticklabels(cols, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("bit accuracy" if manifest.metric_label == "accuracy"
                  else "detection rate")
    ax.axhline(1.0, lw=0.6, color="grey", ls=":")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _plot_fidelity(manifest: RunManifest, path: Path) -> Path:
    psnrs = [rec["psnr"] for rec in manifest.records]
    ssims = [rec["ssim"] for rec in manifest.records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 3.0))
    ax1.hist(psnrs, bins=min(20, max(3, len(psnrs) // 2)), color="#4878b0")
    ax1.set_xlabel("PSNR (dB)")
    ax1.set_ylabel("images")
    ax2.hist(ssims, bins=min(20, max(3, len(ssims) // 2)), color="#b04848")
    ax2.set_xlabel("SSIM")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
