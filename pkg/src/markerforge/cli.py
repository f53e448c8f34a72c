"""markerforge command line.

Exit codes: 0 ok, 1 usage, 2 I/O or malformed input, 3 nothing decoded
(``scan``/``decode``) or study pattern not met (``study``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import artcode, gridtag
from .detector import DetectorError, WindowSpec, model_to_json
from .imaging import PnmError, grid_to_image, read_pnm, to_luminance, write_pnm
from .pipeline import UrfConfig, decode_whole, default_pool, run_urf
from .scenegen import SceneError, approach_sequence, compose_scene, load_scene_json
from .study import HARD, SIMPLE, ModelMissing, StudyConfig, frame_images, load_model, run_study, train_default

OK, USAGE, BAD_INPUT, NOTHING = 0, 1, 2, 3
SEED_ENV = "MARKERFORGE_SEED"


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _scales(text):
    try:
        vals = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad scale list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty scale list")
    return vals


def _common(p, model=False):
    p.add_argument("--seed", type=_u64, default=None, help=f"RNG seed (falls back to ${SEED_ENV}, then 0)")
    p.add_argument("--out", default=None, help="output directory")
    if model:
        p.add_argument("--model", default=None, help="classifier model JSON")
        p.add_argument("--policy", default=None, help="Artcode validation policy (JSON text or file)")
        p.add_argument("--window-scales", type=_scales, default=None, help="comma-separated window sides")
        p.add_argument("--threshold", type=float, default=None, help="window score threshold")


def build_parser():
    ap = _Parser(prog="markerforge", description="Detect, identify and decode visual markers.")
    sub = ap.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="render a marker to PGM")
    gsub = gen.add_subparsers(dest="family", required=True)
    g = gsub.add_parser("artcode")
    g.add_argument("--code", required=True)
    g.add_argument("--size", type=int, default=512)
    g.add_argument("-o", "--output", required=True)
    _common(g)
    g = gsub.add_parser("gridtag")
    g.add_argument("--payload", required=True, help="16-bit hex value")
    g.add_argument("--module-px", type=int, default=16)
    g.add_argument("-o", "--output", required=True)
    _common(g)

    t = sub.add_parser("train", help="train the window classifier on a synthetic corpus")
    t.add_argument("--per-kind", type=int, default=200)
    t.add_argument("-o", "--output", default="model.json")
    _common(t)

    s = sub.add_parser("scan", help="run detection, identification and decoding")
    s.add_argument("image")
    _common(s, model=True)

    d = sub.add_parser("decode", help="decode a whole image with every decoder, no detection")
    d.add_argument("image")
    d.add_argument("--policy", default=None)

    sy = sub.add_parser("synth", help="compose synthetic scenes from a JSON spec")
    ssub = sy.add_subparsers(dest="what", required=True)
    for name in ("scene", "sequence"):
        q = ssub.add_parser(name)
        q.add_argument("spec", help="scene JSON document")
        if name == "scene":
            q.add_argument("-o", "--output", default=None)
        _common(q)

    st = sub.add_parser("study", help="run one of the two approach studies")
    st.add_argument("variant", choices=[SIMPLE, HARD])
    st.add_argument("--train-first", action="store_true", help="train a model from the default corpus first")
    st.add_argument("--corpus-seed", type=_u64, default=0)
    _common(st, model=True)
    return ap


# ---------------------------------------------------------------- helpers

def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return _u64(env)
    except argparse.ArgumentTypeError as e:
        raise UsageError(f"${SEED_ENV}: {e}") from None


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def _write(path, data: bytes | str):
    try:
        d = os.path.dirname(path)
        if d:
            os.makedirs(d, exist_ok=True)
        mode = "wb" if isinstance(data, bytes) else "w"
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as e:
        raise InputError(f"cannot write {path}: {e.strerror}") from None


def _read_grid(path):
    try:
        with open(path, "rb") as fh:
            return to_luminance(read_pnm(fh.read()))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    except PnmError as e:
        raise InputError(f"{path}: {e}") from None


def _policy(args):
    if not getattr(args, "policy", None):
        return artcode.DEFAULT_POLICY
    text = args.policy
    if not text.lstrip().startswith("{"):
        text = _read_text(text)
    try:
        return artcode.ValidationPolicy.from_dict(json.loads(text))
    except (ValueError, TypeError, AttributeError) as e:
        raise InputError(f"bad policy: {e}") from None


def _urf_config(args):
    base = WindowSpec()
    try:
        spec = WindowSpec(args.window_scales or base.scales, base.stride_fraction,
                          base.score_threshold if args.threshold is None else args.threshold)
    except ValueError as e:
        raise UsageError(str(e)) from None
    return UrfConfig(window_spec=spec, validation_policy=_policy(args))


def _model(args):
    if not args.model:
        raise UsageError("--model is required")
    try:
        return load_model(args.model)
    except ModelMissing as e:
        raise InputError(str(e)) from None
    except (DetectorError, ValueError) as e:
        raise InputError(f"{args.model}: {e}") from None


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------- commands

def cmd_generate(args):
    seed = _seed(args)
    if args.family == "artcode":
        try:
            desc = artcode.parse_code(args.code)
        except artcode.CodeError as e:
            raise UsageError(f"bad code {args.code!r}: {type(e).__name__}: {e}") from None
        try:
            grid = artcode.render_artcode(desc, args.size, seed)
        except artcode.Unrenderable as e:
            raise InputError(f"Unrenderable: {e}") from None
    else:
        try:
            data = gridtag.parse_payload(args.payload)
        except ValueError as e:
            raise UsageError(f"bad payload {args.payload!r}: {e}") from None
        if args.module_px < 2:
            raise UsageError("--module-px must be >= 2")
        grid = gridtag.render_gridtag(gridtag.encode_gridtag(data), args.module_px)
    out = os.path.join(args.out, args.output) if args.out else args.output
    _write(out, write_pnm(grid_to_image(grid)))
    print(out)
    return OK


def cmd_train(args):
    if args.per_kind < 5:
        raise UsageError("--per-kind must be >= 5 so the split holds windows out")
    seed = _seed(args)
    model, acc = train_default(seed, args.per_kind)
    out = os.path.join(args.out, args.output) if args.out else args.output
    _write(out, model_to_json(model))
    print(f"held-out accuracy {acc:.4f}", file=sys.stderr)
    print(out)
    return OK


def cmd_scan(args):
    cfg = _urf_config(args)
    model = _model(args)
    grid = _read_grid(args.image)
    out_dir = args.out or os.path.dirname(args.image) or "."
    stem = _stem(args.image)
    try:
        report = run_urf(grid, model, default_pool(cfg.validation_policy), cfg,
                         image_id=os.path.basename(args.image), heatmap_ref=f"{stem}_gray.pgm")
    except DetectorError as e:
        raise InputError(f"{args.image}: {type(e).__name__}: {e}") from None
    for name, img in frame_images(grid, report, cfg.alpha).items():
        if name == "input":
            continue
        ext = "pgm" if img.channels == 1 else "ppm"
        _write(os.path.join(out_dir, f"{stem}_{name}.{ext}"), write_pnm(img))
    path = os.path.join(out_dir, f"{stem}_report.json")
    _write(path, report.to_json())
    print(path)
    if not report.decoded:
        print(f"{args.image}: no marker decoded", file=sys.stderr)
        return NOTHING
    return OK


def cmd_decode(args):
    grid = _read_grid(args.image)
    outcomes = decode_whole(grid, default_pool(_policy(args)))
    found = [o.payload for o in outcomes.values() if o.decoded]
    for p in found:
        print(p)
    if not found:
        print(f"{args.image}: no marker decoded", file=sys.stderr)
        return NOTHING
    return OK


def cmd_synth(args):
    seed = _seed(args)
    try:
        scene, seq = load_scene_json(_read_text(args.spec))
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{args.spec}: malformed scene: {e}") from None
    try:
        if args.what == "scene":
            grid, truth = compose_scene(scene, seed)
            out = args.output or f"{_stem(args.spec)}.pgm"
            if args.out:
                out = os.path.join(args.out, out)
            _write(out, write_pnm(grid_to_image(grid)))
            _write(os.path.splitext(out)[0] + "_truth.json", json.dumps(truth.to_dict(), indent=2) + "\n")
            print(out)
            return OK
        if seq is None:
            raise InputError(f"{args.spec}: sequence needs a \"sequence\" member")
        frames = approach_sequence(scene, seq, seed)
    except (SceneError, artcode.Unrenderable) as e:
        raise InputError(f"{args.spec}: {type(e).__name__}: {e}") from None
    except ValueError as e:
        raise InputError(f"{args.spec}: {e}") from None
    out_dir = args.out or "."
    truths = []
    for i, (grid, truth) in enumerate(frames):
        _write(os.path.join(out_dir, f"frame{i}.pgm"), write_pnm(grid_to_image(grid)))
        truths.append(truth.to_dict())
    path = os.path.join(out_dir, "truth.json")
    _write(path, json.dumps({"frames": truths}, indent=2) + "\n")
    print(path)
    return OK


def cmd_study(args):
    cfg_urf = _urf_config(args)
    if args.train_first:
        model, acc = train_default(args.corpus_seed)
        print(f"trained model, held-out accuracy {acc:.4f}", file=sys.stderr)
    else:
        model = _model(args)
    out_dir = args.out or f"study_{args.variant}"
    cfg = StudyConfig(args.variant, _seed(args), out_dir)
    try:
        report = run_study(cfg, model, cfg_urf)
    except OSError as e:
        raise InputError(f"cannot write study output: {e.strerror}") from None
    print(f"{args.variant}: {report.pattern} localized {report.localized_count}/5", file=sys.stderr)
    print(os.path.join(out_dir, "report.json"))
    if not report.passed:
        print(f"{args.variant}: expected pattern not met", file=sys.stderr)
        return NOTHING
    return OK


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "scan": cmd_scan,
    "decode": cmd_decode, "synth": cmd_synth, "study": cmd_study,
}


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return BAD_INPUT


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
