"""Command-line entry point: ``morphforge <subcommand> ...``.

Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
errors. Every subcommand writes a ``run.json`` provenance record next to its
outputs; all other outputs are byte-identical across runs with the same
inputs, configuration and seed.
"""
import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import jsonschema

from . import __version__
from ._io import atomic_write_bytes, atomic_write_text, file_digest, write_json
from .errors import BackendError, MorphforgeError, ReportError, ValidationError
from .frs_vuln import (REPORT_SCHEMA, DownsampledRecognition, MeanPixelRecognition, MorphSample,
                       fmr_threshold, imposter_scores, score_morphs, vulnerability_report, write_scatter_csv)
from .imaging import encode_png, load_image, load_landmarks
from .lma_morph import MorphMethod, interpolate_landmarks, morph_pair
from .mad.evaluate import MAD_REPORT_SCHEMA, cross_set_scores, grid_report, score_rows
from .mad.metrics import det_metrics
from .mad.features import FeatureConfig
from .mad.model import load_model, save_model, train_mad
from .protocol import (bona_fide_images, build_splits, load_manifest, load_protocol, probe_images,
                       save_protocol)
from .regen.backends import RegenBackends, toy_backends
from .regen.fitting import align_to_backend, finetune_encoder, latent_interpolation_morph, regen_morph
from .regen.lbfgs import FitOptions
from .regen.tensorio import ExternalBackend

RECOGNITION_BACKENDS = {"downsampled": DownsampledRecognition, "meanpixel": MeanPixelRecognition}
MORPHS_INDEX = "morphs.json"
RUN_RECORD = "run.json"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _named_path(text):
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, Path(path)


def _named_paths(items, what):
    out = {}
    for name, path in items or []:
        if name in out:
            raise UsageError(f"{what} name {name!r} given twice")
        out[name] = path
    return out


# --------------------------------------------------------------------- provenance

class _Inputs:
    """Collects digests of every file a run reads."""

    def __init__(self):
        self.digests = {}

    def add(self, path):
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"input file not found: {path}")
        self.digests[str(path)] = file_digest(path)
        return path


def _write_run_record(out_dir, args, inputs: _Inputs, outputs):
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("func",)}
    config = json.loads(json.dumps(config, default=str))
    record = {
        "subcommand": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": inputs.digests,
        "outputs": sorted(str(p) for p in outputs),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    write_json(Path(out_dir) / RUN_RECORD, record)


# --------------------------------------------------------------------- helpers

def _load_manifest(path, inputs):
    return load_manifest(inputs.add(path))


def _image(manifest, image_id, inputs):
    return load_image(inputs.add(manifest.image_path(image_id)))


def _landmarks(landmark_dir, image_id, inputs):
    file_id, lm = load_landmarks(inputs.add(Path(landmark_dir) / f"{image_id}.json"))
    if file_id != image_id:
        raise ValidationError(f"landmark file for {image_id!r} names image {file_id!r}")
    return lm


def _fit_options(args):
    opts = FitOptions()
    overrides = {"learning_rate": args.learning_rate, "decay_rate": args.decay_rate,
                 "early_stop_threshold": args.early_stop_threshold, "patience": args.patience,
                 "max_iterations": args.max_iterations}
    return opts.replace(**{k: v for k, v in overrides.items() if v is not None})


def _regen_backends(args):
    if args.backend == "toy":
        return toy_backends(size=args.backend_size, latent_dim=args.latent_dim)
    cmd = args.backend_cmd or os.environ.get("MORPHFORGE_BACKEND_CMD")
    if not cmd:
        raise UsageError("--backend external needs --backend-cmd or MORPHFORGE_BACKEND_CMD")
    ext = ExternalBackend(cmd, args.backend_size, args.latent_dim)
    return RegenBackends(ext, ext, ext)


def _read_morph_index(morph_dir, inputs):
    path = inputs.add(Path(morph_dir) / MORPHS_INDEX)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        entries = doc["morphs"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: not a morph index ({exc})") from exc
    return entries


def _morph_images(morph_dir, split, inputs):
    entries = [e for e in _read_morph_index(morph_dir, inputs) if split is None or e["split"] == split]
    return entries, [load_image(inputs.add(Path(morph_dir) / e["file"])) for e in entries]


# --------------------------------------------------------------------- subcommands

def cmd_synth(args, inputs):
    from .synthetic import write_synthetic_dataset

    manifest = write_synthetic_dataset(args.out, n_identities=args.identities, size=args.size,
                                       n_references=args.references, n_probes=args.probes, seed=args.seed)
    return args.out, [manifest]


def cmd_protocol(args, inputs):
    manifest = _load_manifest(args.manifest, inputs)
    proto = build_splits(manifest, train_fraction=args.train_fraction,
                         pairs_per_identity=args.pairs_per_identity, seed=args.seed)
    out = save_protocol(proto, args.out)
    return Path(args.out).parent, [out]


def cmd_morph(args, inputs):
    method = MorphMethod(args.method)
    if not 0.0 <= args.alpha <= 1.0:
        raise UsageError(f"--alpha must lie in [0, 1], got {args.alpha}")
    manifest = _load_manifest(args.manifest, inputs)
    proto = load_protocol(inputs.add(args.pairs))
    pairs = proto.pairs(None if args.split == "all" else args.split)
    out_dir = Path(args.out)
    backends = opts = None
    if method is not MorphMethod.LMA:
        backends = _regen_backends(args)
        opts = _fit_options(args)
        if args.finetune_encoder:
            size = backends.generator.output_size
            train_ids = bona_fide_images(manifest, proto, "train")
            images = [align_to_backend(_image(manifest, i, inputs), _landmarks(args.landmarks, i, inputs), size)
                      for i in train_ids]
            backends = RegenBackends(finetune_encoder(backends.encoder, backends.generator,
                                                      backends.perceptual, images, opts),
                                     backends.generator, backends.perceptual)
    entries, outputs = [], []
    for p in pairs:
        img_a, img_b = _image(manifest, p.a_img, inputs), _image(manifest, p.b_img, inputs)
        la, lb = _landmarks(args.landmarks, p.a_img, inputs), _landmarks(args.landmarks, p.b_img, inputs)
        if method is MorphMethod.LMA:
            morph = morph_pair(img_a, la, img_b, lb, args.alpha)
        elif method is MorphMethod.REGEN:
            morph = regen_morph(img_a, la, img_b, lb, args.alpha, backends, opts, refine=not args.no_refine)
        else:
            size = backends.generator.output_size
            morph = latent_interpolation_morph(align_to_backend(img_a, la, size),
                                               align_to_backend(img_b, lb, size),
                                               args.alpha, backends, opts, refine=not args.no_refine)
        name = f"{p.a_id}_{p.b_id}_{method.value}.png"
        data = encode_png(morph)
        outputs.append(atomic_write_bytes(out_dir / name, data))
        entries.append({"morph_id": p.morph_id, "file": name, "method": method.value, "alpha": args.alpha,
                        "split": p.split, "subjects": [p.a_id, p.b_id], "sources": [p.a_img, p.b_img]})
        if method is MorphMethod.LMA:
            # interpolated landmarks let later stages re-align LMA morphs
            entries[-1]["landmarks"] = interpolate_landmarks(la, lb, args.alpha).tolist()
    index = {"method": method.value, "alpha": args.alpha, "morphs": entries}
    outputs.append(write_json(out_dir / MORPHS_INDEX, index))
    return out_dir, outputs


def cmd_vuln(args, inputs):
    manifest = _load_manifest(args.manifest, inputs)
    proto = load_protocol(inputs.add(args.protocol))
    attacks = _named_paths(args.morphs, "attack")
    if not attacks:
        raise UsageError("at least one --morphs NAME=DIR is required")
    split = args.split
    probe_ids = probe_images(manifest, proto, split)
    probes = {ident: [(pid, _image(manifest, pid, inputs)) for pid in sorted(ids)]
              for ident, ids in probe_ids.items()}
    members = proto.identities(split)
    gallery = {ident.identity_id: [_image(manifest, im.image_id, inputs) for im in ident.images]
               for ident in manifest.identities if ident.identity_id in members}
    out_dir = Path(args.out)
    outputs = []
    backends = {name: RECOGNITION_BACKENDS[name]() for name in sorted(set(args.recognition))}
    thresholds = {name: fmr_threshold(imposter_scores(gallery, be), args.target_fmr)
                  for name, be in backends.items()}
    tables = {}
    for attack, morph_dir in sorted(attacks.items()):
        entries, images = _morph_images(morph_dir, split, inputs)
        samples = [MorphSample(e["morph_id"], im, tuple(e["subjects"]), tuple(e["sources"]))
                   for e, im in zip(entries, images)]
        tables[attack] = {}
        for name, be in backends.items():
            table = score_morphs(samples, probes, be)
            tables[attack][name] = table
            outputs.append(atomic_write_text(out_dir / f"scores_{attack}_{name}.csv", table.to_csv()))
    reports = vulnerability_report(tables, thresholds, seed=args.seed)
    for rep in reports:
        jsonschema.validate(rep, REPORT_SCHEMA)
        outputs.append(write_scatter_csv(rep, out_dir / f"scatter_{rep['attack']}_{rep['backend']}.csv"))
    outputs.append(write_json(out_dir / "vuln_report.json", {"reports": reports, "seed": args.seed}))
    return out_dir, outputs


def _feature_config(args):
    return FeatureConfig(tuple(args.color_spaces), args.pyramid_levels, tuple(args.lbp_radii))


def cmd_mad_train(args, inputs):
    manifest = _load_manifest(args.manifest, inputs)
    proto = load_protocol(inputs.add(args.protocol))
    _, attacks = _morph_images(args.attacks, args.split, inputs)
    bona = [_image(manifest, i, inputs) for i in bona_fide_images(manifest, proto, args.split)]
    model = train_mad(attacks, bona, _feature_config(args))
    out_dir = Path(args.out)
    return out_dir, [save_model(model, out_dir / "model.json", seed=args.seed)]


def cmd_mad_eval(args, inputs):
    manifest = _load_manifest(args.manifest, inputs)
    proto = load_protocol(inputs.add(args.protocol))
    model_paths = _named_paths(args.model, "model")
    attack_dirs = _named_paths(args.attacks, "attack")
    if not model_paths or not attack_dirs:
        raise UsageError("mad-eval needs at least one --model and one --attacks NAME=PATH")
    models = {name: load_model(inputs.add(path)) for name, path in model_paths.items()}
    bona_ids = bona_fide_images(manifest, proto, args.split)
    bona = [_image(manifest, i, inputs) for i in bona_ids]
    test_sets, attack_ids = {}, {}
    for name, d in sorted(attack_dirs.items()):
        entries, images = _morph_images(d, args.split, inputs)
        test_sets[name] = (images, bona)
        attack_ids[name] = [e["morph_id"] for e in entries]
    scores = cross_set_scores(models, test_sets)
    grid = {}
    out_dir = Path(args.out)
    outputs = []
    for (train, test), (att, bs) in sorted(scores.items()):
        grid[(train, test)] = det_metrics(att, bs)
        body = score_rows(attack_ids[test] + bona_ids, ["attack"] * len(att) + ["bonafide"] * len(bs), att + bs)
        outputs.append(atomic_write_text(out_dir / f"scores_{train}_on_{test}.csv", body))
    report = grid_report(grid, seed=args.seed)
    jsonschema.validate(report, MAD_REPORT_SCHEMA)
    outputs.append(write_json(out_dir / "mad_report.json", report))
    return out_dir, outputs


def emit_plots(report_paths, out_dir):
    """Write plot-ready scatter CSVs and a JSON describing axes and threshold lines.

    Parameters
    ----------
    report_paths : list of path-like
        ``vuln_report.json`` files written by ``morphforge vuln``.
    out_dir : path-like
        Destination directory.

    Returns
    -------
    list of Path
        Files written, in a deterministic order.
    """
    out_dir = Path(out_dir)
    figures, outputs = [], []
    seen = set()
    for path in report_paths:
        path = Path(path)
        if not path.is_file():
            raise ReportError(f"missing report {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            reports = doc["reports"] if isinstance(doc, dict) and "reports" in doc else [doc]
            for rep in reports:
                jsonschema.validate(rep, REPORT_SCHEMA)
        except (ValueError, jsonschema.ValidationError) as exc:
            raise ReportError(f"{path}: not a vulnerability report ({exc})") from exc
        for rep in reports:
            key = (rep["attack"], rep["backend"])
            if key in seen:
                raise ReportError(f"attack {key[0]!r} with backend {key[1]!r} appears in more than one report")
            seen.add(key)
            name = f"scatter_{rep['attack']}_{rep['backend']}.csv"
            outputs.append(write_scatter_csv(rep, out_dir / name))
            xs = [p[0] for p in rep["scatter"]] + [rep["tau"]]
            ys = [p[1] for p in rep["scatter"]] + [rep["tau"]]
            figures.append({
                "file": name,
                "attack": rep["attack"],
                "backend": rep["backend"],
                "n_points": len(rep["scatter"]),
                "x_axis": {"column": "score_subject1", "label": "max similarity to subject 1",
                           "min": min(xs), "max": max(xs)},
                "y_axis": {"column": "score_subject2", "label": "max similarity to subject 2",
                           "min": min(ys), "max": max(ys)},
                "threshold_lines": [
                    {"orientation": "vertical", "value": rep["tau"], "label": "decision threshold"},
                    {"orientation": "horizontal", "value": rep["tau"], "label": "decision threshold"},
                ],
            })
    figures.sort(key=lambda f: f["file"])
    outputs.append(write_json(out_dir / "plots.json", {"figures": figures}))
    return outputs


def cmd_report(args, inputs):
    for p in args.reports:
        if Path(p).is_file():
            inputs.add(p)
    return Path(args.out), emit_plots(args.reports, args.out)


# --------------------------------------------------------------------- parser

def _add_fit_options(p):
    g = p.add_argument_group("latent fitting")
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--decay-rate", type=float)
    g.add_argument("--early-stop-threshold", type=float)
    g.add_argument("--patience", type=int)
    g.add_argument("--max-iterations", type=int)


def build_parser():
    parser = _Parser(prog="morphforge", description="Face morph generation and evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"morphforge {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True, metavar="COMMAND")

    p = sub.add_parser("synth", help="write a synthetic face dataset with landmarks and a manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--identities", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--references", type=int, default=1)
    p.add_argument("--probes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("protocol", help="build identity-disjoint train/test splits and morph pairs")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--pairs-per-identity", type=int, default=1)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("morph", help="generate morphs for the protocol's pairs")
    p.add_argument("--method", choices=[m.value for m in MorphMethod], default="lma")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--pairs", type=Path, required=True, help="protocol JSON holding the morph pairs")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--landmarks", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=["train", "test", "all"], default="all")
    p.add_argument("--backend", choices=["toy", "external"], default="toy")
    p.add_argument("--backend-cmd", help="external backend command line (fallback: MORPHFORGE_BACKEND_CMD)")
    p.add_argument("--backend-size", type=int, default=64)
    p.add_argument("--latent-dim", type=int, default=512)
    p.add_argument("--no-refine", action="store_true", help="use the encoder output without latent fitting")
    p.add_argument("--finetune-encoder", action="store_true",
                   help="fine-tune the encoder on train-split bona fide images first")
    p.add_argument("--seed", type=int, default=0)
    _add_fit_options(p)
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("vuln", help="score morphs against probes and compute MMPMR/FMMPMR")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--protocol", type=Path, required=True)
    p.add_argument("--morphs", type=_named_path, action="append", metavar="ATTACK=DIR")
    p.add_argument("--recognition", action="append", choices=sorted(RECOGNITION_BACKENDS),
                   help="recognition backend (repeatable; default: all)")
    p.add_argument("--target-fmr", type=float, default=0.001)
    p.add_argument("--split", choices=["train", "test"], default="test")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_vuln)

    for name, func in (("mad-train", cmd_mad_train), ("mad-eval", cmd_mad_eval)):
        p = sub.add_parser(name, help="train a morphing attack detector" if name == "mad-train"
                           else "evaluate detectors on known and cross-set attacks")
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--protocol", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--seed", type=int, default=0)
        if name == "mad-train":
            p.add_argument("--attacks", type=Path, required=True, help="morph directory")
            p.add_argument("--split", choices=["train", "test"], default="train")
            p.add_argument("--color-spaces", nargs="+", default=["RGB", "YCbCr", "HSV"])
            p.add_argument("--pyramid-levels", type=int, default=3)
            p.add_argument("--lbp-radii", type=int, nargs="+", default=[1, 2])
        else:
            p.add_argument("--model", type=_named_path, action="append", metavar="TRAIN_ATTACK=MODEL")
            p.add_argument("--attacks", type=_named_path, action="append", metavar="TEST_ATTACK=DIR")
            p.add_argument("--split", choices=["train", "test"], default="test")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="emit plot data (scatter CSVs and threshold lines)")
    p.add_argument("--reports", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_report)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "recognition", None) is None and args.command == "vuln":
        args.recognition = sorted(RECOGNITION_BACKENDS)
    inputs = _Inputs()
    try:
        out_dir, outputs = args.func(args, inputs)
        _write_run_record(out_dir, args, inputs, outputs)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"morphforge: error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, jsonschema.ValidationError) as exc:
        print(f"morphforge: invalid input: {exc}", file=sys.stderr)
        return 1
    except (MorphforgeError, BackendError, OSError) as exc:
        print(f"morphforge: failed: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    try:
        code = run(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
    sys.exit(code)


if __name__ == "__main__":
    main()
