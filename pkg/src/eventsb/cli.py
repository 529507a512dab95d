"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
abort, 5 refusal (uncertified extractor or mismatched checkpoint).
Failures emit one machine-readable JSON line on stderr. All file
outputs are written atomically (temp file + rename). EVENTSB_SEED, when
set, is the default for every --seed flag.
"""

from __future__ import annotations

import functools
import json
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from . import io as evio
from .bridge import entropic_cost, sinkhorn_plan
from .errors import (
    CertificationError,
    CheckpointError,
    ConfigError,
    ConfigMismatchError,
    DataFormatError,
    NumericalAbort,
    ScheduleError,
    SinkhornError,
)
from .events import SUPPORTED_BINS, SceneConfig, bin_events, generate_day_scene, generate_night_scene

_EXIT_CODES = (
    (NumericalAbort, 4),
    (CertificationError, 5),
    (ConfigMismatchError, 5),
    (DataFormatError, 3),
    (CheckpointError, 3),
    (SinkhornError, 3),
    (ScheduleError, 3),
    (ConfigError, 3),
    (ValueError, 3),
    (OSError, 3),
)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except tuple(exc for exc, _ in _EXIT_CODES) as exc:
            code = next(c for klass, c in _EXIT_CODES if isinstance(exc, klass))
            line = json.dumps({"error": type(exc).__name__, "message": str(exc), "code": code})
            click.echo(line, err=True)
            sys.exit(code)

    return wrapper


def _seed_option(help_text="Random seed."):
    return click.option(
        "--seed", type=int, default=0, envvar="EVENTSB_SEED", show_default=True, help=help_text
    )


def _load_histograms(directory):
    directory = Path(directory)
    paths = sorted(directory.glob("*.evh"))
    if not paths:
        raise DataFormatError(f"no .evh files in {directory}")
    return [evio.read_histogram(p) for p in paths]


def _atomic_text(path, text: str) -> None:
    evio.atomic_write_bytes(path, text.encode())


@click.group()
def main():
    """Unpaired day/night event-histogram translation toolkit."""


@main.command("gen-data")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Output directory.")
@click.option("--count", type=int, default=10, show_default=True, help="Number of scenes.")
@click.option("--domain", type=click.Choice(["day", "night"]), default="day", show_default=True)
@_seed_option("Base seed; scene i uses seed+i.")
@click.option("--bins", type=click.Choice([str(b) for b in SUPPORTED_BINS]), default="3", show_default=True, help="Temporal bins per histogram.")
@click.option("--height", type=int, default=32, show_default=True, help="[key: resolution]")
@click.option("--width", type=int, default=32, show_default=True, help="[key: resolution]")
@click.option("--n-shapes", type=int, default=2, show_default=True, help="[key: n_shapes]")
@click.option("--night-light-count", type=int, default=3, show_default=True, help="[key: night_light_count]")
@click.option("--night-noise-rate", type=float, default=0.05, show_default=True, help="[key: night_noise_rate]")
@click.option("--edge-jitter-sigma", type=float, default=0.7, show_default=True, help="[key: edge_jitter_sigma]")
@click.option("--polarity-bias", type=float, default=0.85, show_default=True, help="[key: polarity_bias]")
@click.option("--window", type=float, default=0.1, show_default=True, help="[key: window]")
@_handle_errors
def gen_data(out_dir, count, domain, seed, bins, height, width, n_shapes,
             night_light_count, night_noise_rate, edge_jitter_sigma, polarity_bias, window):
    """Generate synthetic scenes as EVS1 stream + EVH1 histogram pairs."""
    bins = int(bins)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        scene_seed = seed + i
        cfg = SceneConfig(
            resolution=(height, width),
            n_shapes=n_shapes,
            night_light_count=night_light_count,
            night_noise_rate=night_noise_rate,
            edge_jitter_sigma=edge_jitter_sigma,
            polarity_bias=polarity_bias,
            seed=scene_seed,
            window=window,
        )
        stream = generate_day_scene(cfg) if domain == "day" else generate_night_scene(cfg)
        histogram = bin_events(stream, bins)
        histogram.domain_tag = domain
        stream_path = out / f"{domain}_{i:04d}.evs"
        hist_path = out / f"{domain}_{i:04d}.evh"
        evio.write_stream(stream_path, stream)
        evio.write_histogram(hist_path, histogram)
        entries.append(
            {
                "stream": stream_path.name,
                "histogram": hist_path.name,
                "seed": scene_seed,
                "domain": domain,
            }
        )
    manifest = {
        "domain": domain,
        "bins": bins,
        "count": count,
        "base_seed": seed,
        "entries": entries,
    }
    _atomic_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    click.echo(f"wrote {count} {domain} scene(s) to {out}")


@main.command("train")
@click.option("--day", "day_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Directory of day .evh files.")
@click.option("--night", "night_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Directory of night .evh files.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True, help="Output directory for checkpoint + loss.csv.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config mirroring the training config; flags override its keys.")
@click.option("--direction", type=click.Choice(["day_to_night", "night_to_day"]), default=None, help="[key: direction]")
@click.option("--bins", type=click.Choice([str(b) for b in SUPPORTED_BINS]), default=None, help="[key: bins]")
@click.option("--size", type=int, default=None, help="[key: size]")
@click.option("--iterations", type=int, default=None, help="[key: iterations]")
@click.option("--batch-size", type=int, default=None, help="[key: batch_size]")
@click.option("--lr-generator", type=float, default=None, help="[key: lr_generator]")
@click.option("--lr-critic", type=float, default=None, help="[key: lr_critic]")
@click.option("--checkpoint-every", type=int, default=None, help="[key: checkpoint_every]")
@click.option("--norm-cap", type=float, default=None, help="[key: norm_cap]")
@click.option("--base-channels", type=int, default=None, help="[key: base_channels]")
@click.option("--critic-channels", type=int, default=None, help="[key: critic_channels]")
@click.option("--seed", type=int, default=None, envvar="EVENTSB_SEED", help="[key: seed]")
@_handle_errors
def train_cmd(day_dir, night_dir, out_dir, config_path, **overrides):
    """Train the translator on unpaired day/night histogram sets."""
    from .training import TrainConfig, train

    raw = {}
    if config_path:
        try:
            raw = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{config_path}: {exc}") from exc
    for key, value in overrides.items():
        if value is not None:
            raw[key] = int(value) if key == "bins" else value
    cfg = TrainConfig.from_dict(raw)
    day_set = _load_histograms(day_dir)
    night_set = _load_histograms(night_dir)
    result = train(cfg, day_set, night_set, out_dir)
    click.echo(f"checkpoint: {result.checkpoint_path}")
    click.echo(f"loss log:   {result.loss_csv_path}")


@main.command("translate")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--input", "input_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Directory of .evh files to translate.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_seed_option("Seed for the chain noise.")
@_handle_errors
def translate_cmd(checkpoint, input_dir, out_dir, seed):
    """Translate histograms through the full chain of a trained model."""
    from .training import translate

    inputs = sorted(Path(input_dir).glob("*.evh"))
    if not inputs:
        raise DataFormatError(f"no .evh files in {input_dir}")
    histograms = [evio.read_histogram(p) for p in inputs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    translated = translate(checkpoint, histograms, seed=seed)
    for src, hist in zip(inputs, translated):
        evio.write_histogram(out / f"{src.stem}_translated.evh", hist)
    click.echo(f"translated {len(translated)} histogram(s) into {out}")


@main.command("eval")
@click.option("--day", "day_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Day histograms for extractor training.")
@click.option("--night", "night_dir", type=click.Path(exists=True, file_okay=False), required=True, help="Night histograms for extractor training.")
@click.option("--set-a", type=click.Path(exists=True, file_okay=False), required=True, help="First comparison set.")
@click.option("--set-b", type=click.Path(exists=True, file_okay=False), required=True, help="Second comparison set.")
@click.option("--arch", type=click.Choice(["fid", "fvd", "both"]), default="fid", show_default=True)
@click.option("--kid/--no-kid", "with_kid", default=True, show_default=True, help="Also compute the kernel distance.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Write the metric report here.")
@_seed_option("Extractor training seed.")
@_handle_errors
def eval_cmd(day_dir, night_dir, set_a, set_b, arch, with_kid, out_path, seed):
    """Train day/night extractors and score set-a against set-b."""
    from .metrics import metric_report, train_extractor

    day_set = _load_histograms(day_dir)
    night_set = _load_histograms(night_dir)
    a = _load_histograms(set_a)
    b = _load_histograms(set_b)
    fid_ext = fvd_ext = None
    if arch in ("fid", "both"):
        fid_ext, _ = train_extractor(day_set, night_set, arch="fid", seed=seed)
    if arch in ("fvd", "both"):
        fvd_ext, _ = train_extractor(day_set, night_set, arch="fvd", seed=seed)
    report = metric_report(a, b, fid_extractor=fid_ext, fvd_extractor=fvd_ext, with_kid=with_kid)
    text = report.to_text()
    click.echo(text, nl=False)
    if out_path:
        _atomic_text(out_path, text)


@main.command("toy-ot")
@click.option("--size", type=int, default=5, show_default=True, help="Support size of both distributions.")
@click.option("--epsilon", type=float, default=0.1, show_default=True, help="Entropy regularization strength.")
@click.option("--max-iter", type=int, default=10000, show_default=True)
@click.option("--tol", type=float, default=1e-9, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Write the plan as CSV.")
@_seed_option("Seed for the random problem instance.")
@_handle_errors
def toy_ot(size, epsilon, max_iter, tol, out_path, seed):
    """Solve a random entropic transport problem and show the plan."""
    rng = np.random.default_rng(seed)
    a = rng.random(size)
    a /= a.sum()
    b = rng.random(size)
    b /= b.sum()
    cost = rng.random((size, size))
    plan = sinkhorn_plan(a, b, cost, epsilon, max_iter=max_iter, tol=tol)
    objective = entropic_cost(plan, cost, epsilon)
    click.echo(f"objective {objective!r}")
    click.echo(f"row residual {np.abs(plan.sum(axis=1) - a).max():.3e}")
    click.echo(f"col residual {np.abs(plan.sum(axis=0) - b).max():.3e}")
    if out_path:
        lines = ["row,col,mass"]
        for i in range(size):
            for j in range(size):
                lines.append(f"{i},{j},{float(plan[i, j])!r}")
        _atomic_text(out_path, "\n".join(lines) + "\n")
        click.echo(f"plan written to {out_path}")


@main.command("plot")
@click.option("--loss-csv", type=click.Path(exists=True, dir_okay=False), default=None, help="Training loss log to plot.")
@click.option("--histogram", "histograms", type=click.Path(exists=True, dir_okay=False), multiple=True, help="EVH1 file(s) to render per bin.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@_handle_errors
def plot_cmd(loss_csv, histograms, out_dir):
    """Render loss curves and/or red/blue histogram images."""
    from .viz import parse_loss_csv, plot_loss_curves, render_histogram, save_image

    if not loss_csv and not histograms:
        raise click.UsageError("nothing to plot: pass --loss-csv and/or --histogram")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if loss_csv:
        rows = parse_loss_csv(loss_csv)
        target = out / (Path(loss_csv).stem + ".png")
        fd, tmp = tempfile.mkstemp(dir=out, suffix=".png")
        os.close(fd)
        plot_loss_curves(rows, tmp)
        os.replace(tmp, target)
        written.append(target)
    for path in histograms:
        hist = evio.read_histogram(path)
        for b, img in enumerate(render_histogram(hist)):
            target = out / f"{Path(path).stem}_bin{b}.png"
            fd, tmp = tempfile.mkstemp(dir=out, suffix=".png")
            os.close(fd)
            save_image(img, tmp)
            os.replace(tmp, target)
            written.append(target)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
