"""Command-line entry point: ``textspine <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import annotations as ann_io
from .decoder import Decoder, DecoderConfig, decode, init_decoder, synth_pyramid
from .errors import FormatError, GeometryError, ParameterError, ShapeError
from .evaluation import format_table, load_detections, match, metrics_json
from .geometry import ShrinkSchedule, schedule_ratio
from .gradcheck import CHECKS, TOLERANCE, run_checks
from .grid import atomic_write_bytes, atomic_write_json, load_grd1, save_grd1
from .labels import make_training_target
from .lcau import UpsamplerKind
from .postproc import DetectParams, detect, detections_to_json

log = logging.getLogger("textspine")

IMAGE_SUFFIXES = (".png", ".ppm")
ERRORS = (FormatError, GeometryError, ParameterError, ShapeError, OSError, ValueError)


def _default_seed() -> int:
    try:
        return int(os.environ.get("RSCA_SEED", "0"))
    except ValueError:
        return 0


def _size(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must be an integer, got {text!r}")
    if value <= 0 or value % 32:
        raise argparse.ArgumentTypeError(f"size must be a positive multiple of 32 (e.g. 640, 800), got {value}")
    return value


def _wxh(text: str):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("width and height must be positive")
    return w, h


def _map(jobs: int, fn, items):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# gen-labels
# ---------------------------------------------------------------------------

def cmd_gen_labels(args) -> int:
    schedule = ShrinkSchedule(args.r_a, args.r_b, args.max_epoch)
    src = Path(args.annotations)
    if not src.exists():
        log.error("annotation path %s does not exist", src)
        return 2
    files = ann_io.annotation_files(src)
    if not files:
        log.error("no .json or .txt annotations under %s", src)
        return 2
    out_dir = Path(args.out_dir)

    def work(path):
        try:
            a = ann_io.load_annotation(path, args.width, args.height)
            target = make_training_target(a.instances, schedule, args.epoch, a.height, a.width)
            return a.image_id, np.concatenate([target.mask, target.ignore], axis=1), None
        except ERRORS as exc:
            return path.stem, None, str(exc)

    results = _map(args.jobs, work, files)
    summary = {
        "epoch": args.epoch,
        "shrink_ratio": schedule_ratio(schedule, args.epoch),
        "schedule": {"r_a": args.r_a, "r_b": args.r_b, "max_epoch": args.max_epoch},
        "images": {},
        "errors": {},
    }
    for image_id, grid, err in results:
        if err is not None:
            log.error("%s: %s", image_id, err)
            summary["errors"][image_id] = err
            continue
        save_grd1(out_dir / f"{image_id}.grd", grid)
        summary["images"][image_id] = {
            "positive_pixels": int(grid[0, 0].sum()),
            "ignored_pixels": int(grid[0, 1].sum()),
            "height": int(grid.shape[2]),
            "width": int(grid.shape[3]),
        }
    atomic_write_json(out_dir / "summary.json", summary)
    print(f"wrote {len(summary['images'])} label grids to {out_dir} "
          f"(shrink ratio {summary['shrink_ratio']:.4f}, {len(summary['errors'])} failed)")
    return 1 if not summary["images"] else 0


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _load_rgb(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _image_to_grid(rgb: np.ndarray, size: int) -> np.ndarray:
    from PIL import Image

    resized = Image.fromarray(rgb).resize((size, size), Image.BILINEAR)
    return (np.asarray(resized, dtype=np.float64) / 255.0).transpose(2, 0, 1)[None]


def cmd_detect(args) -> int:
    params = DetectParams(args.bin_thresh, args.d_ts, args.min_area, args.approx_eps_frac, args.score_thresh)
    timings = {"decode": 0.0, "postprocess": 0.0}
    inputs = []
    if args.image:
        if not args.decoder:
            log.error("--image requires --decoder (a directory written by init-decoder)")
            return 2
        decoder = Decoder.load(args.decoder)
        size = args.size or 640
        for path in args.image:
            rgb = _load_rgb(path)
            start = time.perf_counter()
            grid = _image_to_grid(rgb, size)
            prob = decode(synth_pyramid(grid, args.seed, decoder.config.channels), decoder)
            timings["decode"] += time.perf_counter() - start
            inputs.append((Path(path).stem, prob, rgb.shape[1], rgb.shape[0]))
    else:
        if not args.input:
            log.error("give a GRD1 probability map (file or directory) or --image")
            return 2
        src = Path(args.input)
        if not src.exists():
            log.error("input %s does not exist", src)
            return 2
        files = [src] if src.is_file() else sorted(src.glob("*.grd"))
        for path in files:
            prob = load_grd1(path)
            h, w = prob.shape[2:]
            if args.size and (h, w) != (args.size, args.size):
                log.warning("%s is %dx%d, not the declared --size %d", path.name, w, h, args.size)
            ow, oh = args.orig_size or (w, h)
            inputs.append((path.stem, prob, ow, oh))

    def work(item):
        image_id, prob, ow, oh = item
        start = time.perf_counter()
        dets = detect(prob, params, ow, oh)
        return detections_to_json(image_id, dets), time.perf_counter() - start

    results = _map(args.jobs, work, inputs)
    timings["postprocess"] = sum(t for _, t in results)
    payload = [r for r, _ in results]
    atomic_write_json(args.out, payload)
    n = max(len(inputs), 1)
    count = sum(len(r["detections"]) for r in payload)
    print(f"{count} detections in {len(inputs)} image(s) -> {args.out}")
    post_ms = 1000 * timings["postprocess"] / n
    line = f"post-processing {post_ms:.2f} ms/image"
    if args.image:
        line = f"decode {1000 * timings['decode'] / n:.2f} ms/image, " + line
        total = timings["decode"] + timings["postprocess"]
        line += f", {len(inputs) / total:.2f} FPS (wall clock, this machine)" if total > 0 else ""
    print(line, file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    dets = load_detections(args.detections)
    src = Path(args.annotations)
    if not src.exists():
        log.error("annotation path %s does not exist", src)
        return 2
    per_image = []
    seen = set()
    for path in ann_io.annotation_files(src):
        a = ann_io.load_annotation(path)
        seen.add(a.image_id)
        per_image.append(match(dets.get(a.image_id, []), a.instances, args.iou_thresh, a.image_id))
    for image_id in sorted(set(dets) - seen):
        log.warning("detections for %s have no annotation; skipped", image_id)
    print(format_table(per_image))
    if args.out:
        atomic_write_json(args.out, metrics_json(per_image))
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    names = list(CHECKS) if args.op == "all" else [args.op]
    if args.trials == 0:
        log.warning("--trials 0: nothing checked, vacuous pass")
        return 0
    start = time.perf_counter()
    results = run_checks(names, args.trials, args.seed, args.inject_bug)
    ok = True
    for name in names:
        rows = [r for r in results if r.op == name]
        worst = max(r.error for r in rows)
        passed = all(r.passed for r in rows)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name:<14} trials={len(rows):<3} "
              f"max_rel_err={worst:.3e}  tol={TOLERANCE:.0e}")
    print(f"{'all passed' if ok else 'FAILURES'} in {time.perf_counter() - start:.1f} s")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# overlay
# ---------------------------------------------------------------------------

def _polygons_from_json(obj, image_id: str):
    if isinstance(obj, list):
        chosen = next((o for o in obj if str(o.get("image_id")) == image_id), obj[0] if obj else {})
        return _polygons_from_json(chosen, image_id)
    if "detections" in obj:
        return [d["points"] for d in obj["detections"]], None
    if "instances" in obj:
        return [i["points"] for i in obj["instances"]], (obj.get("width"), obj.get("height"))
    raise FormatError("polygon JSON needs 'detections' or 'instances'")


def render_overlay(image_path, polygons, color=(255, 0, 0), width: int = 2):
    """Return the encoded-ready PIL image with ``polygons`` stroked on it."""
    from PIL import Image, ImageDraw

    with Image.open(image_path) as im:
        im.load()
        base = im.copy()
    if not polygons:
        return base
    out = base.convert("RGB")
    draw = ImageDraw.Draw(out)
    for poly in polygons:
        pts = [(int(round(x)), int(round(y))) for x, y in poly]
        if len(pts) >= 2:
            draw.line(pts + pts[:1], fill=tuple(color), width=width, joint="curve")
            for p in pts:
                draw.point(p, fill=tuple(color))
    return out


def cmd_overlay(args) -> int:
    import io

    image_path = Path(args.image)
    try:
        obj = json.loads(Path(args.polygons).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.polygons}: invalid JSON: {exc}") from exc
    polygons, dims = _polygons_from_json(obj, image_path.stem)
    out = render_overlay(image_path, polygons, args.color, args.width)
    if dims and all(dims) and tuple(dims) != out.size:
        log.warning("polygon JSON declares %sx%s but image is %dx%d; drawing clipped to the image",
                    dims[0], dims[1], *out.size)
    fmt = "PPM" if Path(args.out).suffix.lower() == ".ppm" else "PNG"
    buf = io.BytesIO()
    out.save(buf, format=fmt)
    atomic_write_bytes(args.out, buf.getvalue())
    print(f"{len(polygons)} polygon(s) drawn -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# init-decoder
# ---------------------------------------------------------------------------

def cmd_init_decoder(args) -> int:
    cfg = DecoderConfig(args.channels, args.upsampler, args.placement, args.k)
    init_decoder(cfg, args.seed, args.head_bias).save(args.out_dir)
    print(f"decoder ({cfg.upsampler.value}, placement {cfg.lcau_placement.value}, "
          f"{cfg.channels} channels) -> {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textspine", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-labels", help="rasterize shrunk text-spine labels for one epoch")
    p.add_argument("annotations", help="annotation file or directory (.json canonical or .txt CTW1500-style)")
    p.add_argument("out_dir")
    p.add_argument("--r-a", type=float, default=0.4)
    p.add_argument("--r-b", type=float, default=0.6)
    p.add_argument("--max-epoch", type=int, default=1200)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--width", type=int, help="image width for .txt annotations")
    p.add_argument("--height", type=int, help="image height for .txt annotations")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen_labels)

    p = sub.add_parser("detect", help="probability maps (or images + decoder) -> detection JSON")
    p.add_argument("input", nargs="?", help="GRD1 probability map or directory of *.grd")
    p.add_argument("--image", nargs="+", help="PNG/PPM images to run through a serialized decoder")
    p.add_argument("--decoder", help="decoder directory written by init-decoder")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=_size, help="inference side length (640, 800 or a multiple of 32)")
    p.add_argument("--orig-size", type=_wxh, help="original WIDTHxHEIGHT for GRD1 inputs")
    p.add_argument("--bin-thresh", type=float, default=0.3)
    p.add_argument("--d-ts", type=float, default=1.5)
    p.add_argument("--min-area", type=float, default=4.0)
    p.add_argument("--approx-eps-frac", type=float, default=0.01)
    p.add_argument("--score-thresh", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="precision / recall / F-measure against annotations")
    p.add_argument("detections")
    p.add_argument("annotations")
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--out", help="metrics JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every backward pass")
    p.add_argument("--op", choices=["all", *CHECKS], default="all")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--inject-bug", action="store_true", help="corrupt analytic gradients (negative control)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("overlay", help="stroke polygons over an image")
    p.add_argument("image")
    p.add_argument("polygons", help="detection or annotation JSON")
    p.add_argument("out", help="output .png or .ppm")
    p.add_argument("--color", type=int, nargs=3, default=(255, 0, 0))
    p.add_argument("--width", type=int, default=2)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("init-decoder", help="write a seeded random decoder parameter bundle")
    p.add_argument("out_dir")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--upsampler", choices=[k.value for k in UpsamplerKind], default="lcau")
    p.add_argument("--placement", choices=["fpn", "all"], default="all")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--head-bias", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(func=cmd_init_decoder)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ERRORS as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
