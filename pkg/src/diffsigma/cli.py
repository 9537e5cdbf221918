"""Command-line entry point: ``diffsigma <subcommand> ...``.

Payloads (JSON, CSV, tables) go to stdout; logs and the seed/preset
receipt go to stderr. Exit codes: 0 ok, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluation
from .estimators import estimate_direct, estimate_mad, estimate_patch_min
from .imageio import Image, load_image, save_image, scan_dataset
from .model import PRESETS, build_network, load_model, predict_sigma, save_model
from .nn.gradcheck import run_suite
from .noise import difference_of, make_frame_pair
from .rng import ALGORITHM_ID, derive_seed
from .training import TrainConfig, build_dataset, train

log = logging.getLogger("diffsigma")

DEFAULT_SEED = 20240101
DEFAULT_LEVELS = "5,10,15,20,25"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _levels(text: str) -> list[float]:
    try:
        levels = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid sigma list {text!r}")
    if not levels or any(s < 0 for s in levels):
        raise argparse.ArgumentTypeError("levels must be a non-empty list of non-negative numbers")
    return levels


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("DIFFSIGMA_THREADS", "1"))


def _emit(payload) -> None:
    if isinstance(payload, (dict, list)):
        payload = json.dumps(payload, indent=2, sort_keys=True)
    sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")


def cmd_synth(args) -> dict:
    src = Path(args.input)
    out = Path(args.out) if args.out else src.parent / f"{src.name}_sigma{args.sigma:g}"
    out.mkdir(parents=True, exist_ok=True)
    manifest = scan_dataset(src)
    written = []
    for i, entry in enumerate(manifest.entries):
        img = load_image(entry.path)
        base = derive_seed(args.seed, i)
        pair = make_frame_pair(img, args.sigma, base, args.clip)
        stem, ext = Path(entry.path).stem, Path(entry.path).suffix.lower()
        f1, f2 = out / f"{stem}_f1{ext}", out / f"{stem}_f2{ext}"
        # 8-bit storage: unclipped values are clamped only when written
        save_image(pair.frame1, f1, clamp=True)
        save_image(pair.frame2, f2, clamp=True)
        sidecar = {
            "source": entry.path, "frame1": f1.name, "frame2": f2.name,
            "sigma_true": args.sigma, "clip": args.clip, "algorithm": ALGORITHM_ID,
            "seeds": {"base": base, "frame1": pair.seed1, "frame2": pair.seed2},
        }
        (out / f"{stem}.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        written.append(str(out / f"{stem}.json"))
    return {"written": written, "count": len(written)}


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.paper_scale(seed=args.seed) if args.paper_scale else TrainConfig(seed=args.seed)
    overrides = {}
    for name in ("epochs", "samples_per_level", "validation_per_level", "patch_size", "lr", "batch_size"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides)


def cmd_train(args) -> dict:
    cfg = _train_config(args)
    head = "regression" if args.head == "reg" else "classification"
    net_cfg = PRESETS[args.preset](head, cfg.channels, cfg.patch_size)
    if args.print_config:
        print(json.dumps({"train": cfg.to_dict(), "network": net_cfg.to_dict()}, indent=2), file=sys.stderr)
    manifest = scan_dataset(args.data)
    train_set, val_set = build_dataset(manifest, cfg, clip=args.clip)
    model = build_network(net_cfg, seed=derive_seed(cfg.seed, 42))
    history = train(model, train_set, val_set, cfg)
    out = Path(args.out)
    save_model(model, out)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    history_path.write_text(history.to_csv())
    summary = history.summary(cfg, args.preset)
    out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary.update(model=str(out), history=str(history_path))
    return summary


def cmd_estimate(args) -> dict:
    model = load_model(args.model)
    diff = difference_of(load_image(args.f1), load_image(args.f2))
    return predict_sigma(model, diff, args.n_patches, args.seed).to_dict()


def cmd_baseline(args) -> dict:
    f1 = load_image(args.f1)
    if args.method == "patchmin":
        return estimate_patch_min(f1, args.patch).to_dict()
    if not args.f2:
        raise UsageError(f"--method {args.method} needs --f2")
    diff = difference_of(f1, load_image(args.f2))
    fn = estimate_direct if args.method == "direct" else estimate_mad
    return fn(diff).to_dict()


def _estimators(args) -> list:
    ests = []
    if args.model:
        ests.append(evaluation.cnn(load_model(args.model), args.n_patches, args.seed))
    methods = args.method or ([] if args.model else ["direct"])
    ests += [evaluation.classical(m, args.patch) for m in methods]
    return ests


def cmd_evaluate(args) -> str:
    ests = _estimators(args)
    report = evaluation.EvalReport()
    for d in args.data:
        manifest = scan_dataset(d)
        report = report.extend(evaluation.evaluate(ests, manifest, args.levels, args.seed, args.clip,
                                                   threads=_threads(args)))
    report.metadata.update(preset=args.preset, n_patches=args.n_patches)
    if args.out:
        fmt = {".csv": "csv", ".json": "json"}.get(Path(args.out).suffix.lower(), "text")
        Path(args.out).write_bytes(evaluation.render_report(report, fmt))
    return evaluation.render_report(report, args.format).decode()


def cmd_bench(args) -> str:
    ests = _estimators(args)
    rows = []
    for d in args.data:
        rows += evaluation.time_estimator(ests, scan_dataset(d), args.sigma, args.repetitions, args.seed)
    if args.format == "csv":
        lines = ["method,dataset,seconds"] + [f"{r.method},{r.dataset},{r.seconds:.6f}" for r in rows]
        return "\n".join(lines) + "\n"
    if args.format == "json":
        return json.dumps([vars(r) for r in rows], indent=2)
    return evaluation.timing_table(rows) + "\n"


def cmd_gradcheck(args) -> list:
    reports = run_suite(args.tolerance, args.seed)
    for r in reports:
        log.info("%-20s %s (max rel err %.2e)", r.name, "ok" if r.passed else "FAIL", r.max_error)
    return [r.to_dict() for r in reports]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--preset", choices=sorted(PRESETS), default="micro")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--print-config", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="diffsigma", description="Two-frame Gaussian noise level estimation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write noisy frame pairs for a directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--clip", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a network on synthetic pairs")
    p.add_argument("--data", required=True)
    p.add_argument("--head", choices=["reg", "cls"], default="reg")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--clip", action="store_true")
    p.add_argument("--out", default="model.dsqz")
    p.add_argument("--history")
    p.add_argument("--epochs", type=int)
    p.add_argument("--samples-per-level", type=int)
    p.add_argument("--validation-per-level", type=int)
    p.add_argument("--patch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", parents=[common], help="estimate sigma from a frame pair with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--f1", required=True)
    p.add_argument("--f2", required=True)
    p.add_argument("--n-patches", type=int, default=16)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("baseline", parents=[common], help="classical estimate from images")
    p.add_argument("--method", choices=["direct", "mad", "patchmin"], required=True)
    p.add_argument("--f1", required=True)
    p.add_argument("--f2")
    p.add_argument("--patch", type=int, default=16)
    p.set_defaults(func=cmd_baseline)

    for name, helptext in (("evaluate", "error table over datasets and levels"),
                           ("bench", "estimation timing per image")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", action="append", required=True)
        p.add_argument("--model")
        p.add_argument("--method", action="append", choices=["direct", "mad", "patchmin"])
        p.add_argument("--n-patches", type=int, default=16)
        p.add_argument("--patch", type=int, default=16)
        p.add_argument("--format", choices=["text", "csv", "json"], default="text")
        if name == "evaluate":
            p.add_argument("--levels", type=_levels, default=_levels(DEFAULT_LEVELS))
            p.add_argument("--clip", action="store_true")
            p.add_argument("--out")
            p.set_defaults(func=cmd_evaluate)
        else:
            p.add_argument("--sigma", type=float, default=25.0)
            p.add_argument("--repetitions", type=int, default=3)
            p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "diffsigma: error: a subcommand is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    print(f"diffsigma {args.command}: seed={args.seed} preset={args.preset}", file=sys.stderr)
    try:
        payload = args.func(args)
    except UsageError as exc:
        print(f"diffsigma {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"diffsigma {args.command}: error: {exc}", file=sys.stderr)
        return 2
    _emit(payload)
    if args.command == "gradcheck" and not all(r["passed"] for r in payload):
        return 2
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
