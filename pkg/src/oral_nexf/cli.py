"""``nexf`` command line: phantom, simulate, train, reconstruct, evaluate, ablate."""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, Settings, load, parse_dims
from .experiment import ABLATIONS, rays_for, run, simulate, variant
from .field import FieldError, load_checkpoint, save_checkpoint
from .geometry import GeometryError
from .metrics import evaluate
from .rendering import RenderError, load_image, save_image, save_pgm
from .training import TrainingError, reconstruct, train
from .volume import VolumeError, generate_phantom, load_volume, save_volume

log = logging.getLogger("nexf")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
ABLATION_FIELDS = ["variant", "M", "D", "S", "seed", "psnr", "ssim", "dice", "overall", "threshold", "data_range"]


def out_root() -> Path:
    return Path(os.environ.get("NEXF_OUT_DIR", "."))


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, settings: Settings, inputs=(), outputs=()) -> None:
    """Run record that doubles as a config file (the ``[run]`` section is ignored on load)."""
    lines = [
        "[run]",
        f"command = {command}",
        f"argv = {' '.join(sys.argv[1:])}",
        f"version = {__version__}",
        f"timestamp = {datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')}",
    ]
    lines += [f"input = {p} sha256:{sha256(p)}" for p in inputs]
    lines += [f"output = {p}" for p in outputs]
    Path(path).write_text("\n".join(lines) + "\n\n" + settings.to_text())


def _settings(args) -> Settings:
    settings = load(args.config)
    if args.seed is not None:
        settings.set("train.seed", args.seed)
        settings.set("phantom.seed", args.seed)
    if getattr(args, "dims", None):
        settings.set("volume.dims", parse_dims(args.dims))
    return settings


def _default(path, name) -> Path:
    return Path(path) if path else out_root() / name


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_phantom(args) -> int:
    settings = _settings(args)
    volume = generate_phantom(settings.phantom_spec(), settings.dims)
    out = _default(args.out, "phantom.vol")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_volume(volume, out)
    write_manifest(f"{out}.manifest.cfg", "phantom", settings, outputs=[out])
    print(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    settings = _settings(args)
    if args.segments:
        settings.set("geometry.segments", args.segments)
    if args.law:
        settings.set("render.law", args.law)
    volume = load_volume(args.volume)
    settings.set("volume.dims", volume.dims)
    _, image = simulate(settings, volume, args.threads)
    out = _default(args.out, "projection.img")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(image, out)
    save_pgm(image, out.with_suffix(".pgm"))
    write_manifest(f"{out}.manifest.cfg", "simulate", settings, inputs=[args.volume],
                   outputs=[out, out.with_suffix(".pgm")])
    print(f"{out} {image.width}x{image.height}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = _settings(args)
    volume = load_volume(args.volume)
    settings.set("volume.dims", volume.dims)
    inputs = [args.volume]
    if args.image:
        rays, image = rays_for(settings), load_image(args.image)
        inputs.append(args.image)
    else:
        rays, image = simulate(settings, volume, args.threads)
    out = _default(args.out_dir, "train")
    out.mkdir(parents=True, exist_ok=True)
    every = settings.get("train.checkpoint_every")

    def on_log(it, loss, lr, model):
        if every and it and it % every == 0:
            save_checkpoint(model, out / f"checkpoint_{it:07d}.ckpt", iteration=it)

    config = settings.train_config()
    result = train(volume, rays, image, config, threads=args.threads, callback=on_log)
    ckpt = out / "model.ckpt"
    save_checkpoint(result.model, ckpt, iteration=config.iterations)
    loss_csv = out / "loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "lr"])
        for it, (loss, lr) in enumerate(zip(result.losses, result.lrs)):
            w.writerow([it, repr(float(loss)), repr(float(lr))])
    write_manifest(out / "manifest.cfg", "train", settings, inputs=inputs, outputs=[ckpt, loss_csv])
    print(ckpt)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    settings = _settings(args)
    model = load_checkpoint(args.checkpoint)
    dims = settings.dims
    if not args.dims and model.config.mode == "multi":
        dims = (dims[0], dims[1], model.config.heads)
    volume = reconstruct(model, dims)
    out = _default(args.out, "recon.vol")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_volume(volume, out)
    settings.set("volume.dims", dims)
    write_manifest(f"{out}.manifest.cfg", "reconstruct", settings, inputs=[args.checkpoint], outputs=[out])
    print(out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    settings = _settings(args)
    threshold = args.threshold if args.threshold is not None else settings.get("evaluate.threshold")
    report = evaluate(load_volume(args.recon), load_volume(args.truth), threshold)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    if args.csv:
        _append_csv(args.csv, report.csv_row(recon=args.recon, truth=args.truth),
                    ["recon", "truth", *report.FIELDS])
    sys.stdout.write(text)
    return EXIT_OK


def cmd_ablate(args) -> int:
    settings = _settings(args)
    which = "".join(args.which.split(",")).upper()
    bad = sorted(set(which) - set(ABLATIONS))
    if bad:
        raise ConfigError(f"unknown ablation letter(s) {', '.join(bad)}; expected M, D, S")
    volume = load_volume(args.volume) if args.volume else generate_phantom(settings.phantom_spec(), settings.dims)
    out = _default(args.out_dir, "ablation")
    out.mkdir(parents=True, exist_ok=True)
    table = out / "ablation.csv"
    seed = settings.get("train.seed")
    for letters in ["", *dict.fromkeys(which)]:
        name = letters or "full"
        outcome = run(variant(settings, letters), volume, threads=args.threads)
        row = outcome.report.csv_row(variant=name, seed=seed,
                                     **{k: ("x" if k in letters else "v") for k in "MDS"})
        _append_csv(table, row, ABLATION_FIELDS)
        log.info("%s: %s", name, outcome.report)
    write_manifest(out / "manifest.cfg", f"ablate {which}", settings,
                   inputs=[args.volume] if args.volume else [], outputs=[table])
    print(table)
    return EXIT_OK


def _append_csv(path, row, fields) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        if new:
            w.writeheader()
        w.writerow(row)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file or shipped profile name (paper, desk); default desk")
    common.add_argument("--seed", type=int, help="override phantom and training seeds")
    common.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nexf", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a dental-arch phantom volume")
    p.add_argument("--dims", help="e.g. 64x64x32")
    p.add_argument("--out")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", parents=[common], help="render a panoramic projection image")
    p.add_argument("volume")
    p.add_argument("--segments", type=int)
    p.add_argument("--law", choices=["soft", "beer_lambert"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit a neural field to a projection image")
    p.add_argument("volume", help="ground-truth volume (source of the simulated image)")
    p.add_argument("--image", help="use this projection image instead of simulating one")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", parents=[common], help="sample a trained field on a voxel grid")
    p.add_argument("checkpoint")
    p.add_argument("--dims")
    p.add_argument("--out")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common], help="PSNR / SSIM / Dice / overall")
    p.add_argument("recon")
    p.add_argument("truth")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="write the key-value report here")
    p.add_argument("--csv", help="append a row to this CSV table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="train the full model and M/D/S ablations")
    p.add_argument("--which", default="MDS", help="subset of M, D, S (empty for baseline only)")
    p.add_argument("--volume", help="ground-truth volume; default generates the configured phantom")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"nexf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VolumeError, RenderError, FieldError, GeometryError, TrainingError, OSError, ValueError) as exc:
        print(f"nexf: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
