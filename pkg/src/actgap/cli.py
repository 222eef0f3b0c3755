"""``actgap`` command line: run experiments, compare arms, plot curves, print K."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .augmentation import KINDS, RANDOM_K_MODES, AugmentationSpec, build_augmentation
from .config import ConfigError, config_to_text, describe_keys, parse_config
from .curves import parse_curve
from .envs import ENVIRONMENTS, make_env
from .harness import METRICS, generalization_gap, load_arm_dir, run_experiment
from .plotting import render_svg

EXIT_OK, EXIT_RUN_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(f"actgap: error: {message}", file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    try:
        configs = parse_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"--out {out}: not writable ({exc.strerror})") from None
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    total = sum(len(c.seeds) for c in configs)
    print(f"running {len(configs)} arm(s), {total} run(s) into {out}", flush=True)
    result = run_experiment(configs, out, workers=args.workers,
                            config_text=[config_to_text(c) for c in configs])
    for name in [c.name for c in configs]:
        print(f"  {name}: {len(result.arm_curves(name))} run(s) ok", flush=True)
    if result.failures:
        for (name, seed), err in sorted(result.failures.items()):
            _err(f"run {name}/seed_{seed} failed: {err}")
        _err(f"{len(result.failures)} run(s) failed; see {out / 'manifest.json'}")
        return EXIT_RUN_FAILURE
    return EXIT_OK


def _load_arm(path: str, flag: str):
    try:
        return load_arm_dir(path)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(f"{flag} {path}: {exc}") from None


def cmd_gap(args) -> int:
    if args.metric == "steps_to_threshold" and args.threshold is None:
        raise UsageError("--threshold is required with --metric steps_to_threshold")
    curves_a, entry_a = _load_arm(args.reference, "--reference")
    curves_b, entry_b = _load_arm(args.agent, "--agent")
    if entry_a and entry_b:
        for key in ("env", "budget"):
            if entry_a.get(key) != entry_b.get(key):
                raise UsageError(f"--reference and --agent disagree on {key}: "
                                 f"{entry_a.get(key)!r} vs {entry_b.get(key)!r}")
    budget = args.budget
    if budget is None:
        budget = (entry_a or entry_b or {}).get("budget")
    if budget is None:
        raise UsageError("no manifest next to the run directories; pass --budget")
    names = (Path(args.reference).name, Path(args.agent).name)
    try:
        report = generalization_gap(curves_a, curves_b, args.metric, int(budget),
                                    args.threshold, args.window, names)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_csv(), encoding="utf-8", newline="\n")
    return EXIT_OK


def _group(spec: str):
    # LABEL=PATH[,PATH...]; a directory stands for all of its seed_*.csv files
    if "=" in spec:
        label, rest = spec.split("=", 1)
    else:
        label, rest = Path(spec).name, spec
    paths: List[Path] = []
    for part in rest.split(","):
        p = Path(part)
        if p.is_dir():
            found = sorted(p.glob("seed_*.csv"), key=lambda q: int(q.stem.split("_")[1]))
            if not found:
                raise UsageError(f"--input {spec}: no seed_*.csv files in {p}")
            paths.extend(found)
        else:
            paths.append(p)
    return label, paths


def cmd_plot(args) -> int:
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    groups = []
    for spec in args.input:
        label, paths = _group(spec)
        curves = []
        for p in paths:
            try:
                text = p.read_text(encoding="utf-8")
            except OSError as exc:
                raise UsageError(f"--input {p}: {exc.strerror}") from None
            try:
                curves.append(parse_curve(text, str(p)))
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        groups.append((label, curves))
    try:
        svg = render_svg(groups, args.window, args.title, args.x_label, args.y_label)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).write_text(svg, encoding="utf-8", newline="\n")
    print(f"wrote {args.out}", flush=True)
    return EXIT_OK


def cmd_dump_k(args) -> int:
    try:
        spec = AugmentationSpec(args.augmentation, n=args.n, h=args.h, random_k=args.random_k)
    except ValueError as exc:
        raise UsageError(f"--augmentation: {exc}") from None
    base_count = args.base_actions
    if base_count is None:
        base_count = make_env(args.env).spec.base_action_count
    if base_count < 2:
        raise UsageError("--base-actions must be >= 2")
    _, k = build_augmentation(spec, base_count)
    sys.stdout.write(k.to_text())
    return EXIT_OK


def cmd_keys(args) -> int:
    sys.stdout.write(describe_keys())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="actgap", allow_abbrev=False,
                                description="Action-generalization gap experiments.")
    p.add_argument("--verbose", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", allow_abbrev=False, help="run every arm of a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gap", allow_abbrev=False, help="compare two arm directories")
    g.add_argument("--reference", required=True, help="reference arm directory (oracle or baseline)")
    g.add_argument("--agent", required=True, help="agent arm directory")
    g.add_argument("--metric", choices=METRICS, default="auc")
    g.add_argument("--threshold", type=float)
    g.add_argument("--window", type=int, default=20)
    g.add_argument("--budget", type=int, help="override the budget read from the manifest")
    g.add_argument("--out", help="also write the report as CSV")
    g.set_defaults(func=cmd_gap)

    pl = sub.add_parser("plot", allow_abbrev=False, help="render learning curves to SVG")
    pl.add_argument("--input", action="append", required=True, metavar="LABEL=PATH[,PATH]",
                    help="one group per flag; a directory means all of its seed CSVs")
    pl.add_argument("--out", required=True)
    pl.add_argument("--window", type=int, default=20)
    pl.add_argument("--title", default="")
    pl.add_argument("--x-label", default="environment steps")
    pl.add_argument("--y-label", default="episode return (trailing mean)")
    pl.set_defaults(func=cmd_plot)

    k = sub.add_parser("dump-k", allow_abbrev=False, help="print a similarity matrix")
    k.add_argument("--augmentation", choices=KINDS, required=True)
    k.add_argument("--n", type=int, default=1)
    k.add_argument("--h", type=float, default=1.0)
    k.add_argument("--random-k", choices=RANDOM_K_MODES, default="clique")
    k.add_argument("--env", choices=sorted(ENVIRONMENTS), default="cartpole")
    k.add_argument("--base-actions", type=int)
    k.set_defaults(func=cmd_dump_k)

    kk = sub.add_parser("keys", allow_abbrev=False, help="list config keys and defaults")
    kk.set_defaults(func=cmd_keys)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
