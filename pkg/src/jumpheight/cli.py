"""Command-line entry point: ``jumpheight <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .config import load_config
from .exceptions import JumpHeightError
from .kinemetrics import bland_altman, icc_2_1
from .model import Task
from .pipeline import run_study
from .synth import SynthJumpSpec, generate, write_session

MANIFEST_PATTERNS = ("*_manifest.txt", "*.manifest")
SUMMARY_ROWS = ("Mean", "SD")


def _collect_manifests(items) -> list[Path]:
    found = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            hits = sorted({h for pat in MANIFEST_PATTERNS for h in p.glob(pat)})
            if not hits:
                raise FileNotFoundError(f"no manifests ({', '.join(MANIFEST_PATTERNS)}) in {p}")
            found.extend(hits)
        elif p.is_file():
            found.append(p)
        else:
            raise FileNotFoundError(f"no such manifest or directory: {p}")
    return found


def _write_report(manifests, args) -> int:
    cfg = load_config(args.config)
    report = run_study(manifests, cfg, max_workers=getattr(args, "workers", None))
    out = report.write(args.out)
    n_ok = len(report.measurements)
    n_ex = len(report.exclusions)
    print(f"{len(report.sessions)} session(s): {n_ok} measurements, {n_ex} exclusions -> {out}")
    return 0


def cmd_analyze(args) -> int:
    return _write_report(_collect_manifests([args.manifest]), args)


def cmd_study(args) -> int:
    return _write_report(_collect_manifests(args.manifests), args)


def cmd_synth(args) -> int:
    spec = SynthJumpSpec(
        true_height_cm=args.height_cm,
        reps=args.reps,
        scale_mm_per_px=args.scale,
        seed=args.seed,
        fps=args.fps,
        noise_px_sd=args.noise_px,
        noise_n_sd=args.noise_n,
        noise_mm_sd=args.noise_mm,
        participant_id=args.participant,
        task=Task.parse(args.task),
    )
    session = generate(spec)
    manifest = write_session(session, args.out)
    truth = Path(args.out) / f"{manifest.name.removesuffix('_manifest.txt')}_truth.json"
    truth.write_text(json.dumps(session.truth.as_dict(), indent=2, sort_keys=True) + "\n")
    print(manifest)
    return 0


def _numeric(frame: pd.DataFrame, columns) -> pd.DataFrame:
    if columns:
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise KeyError(f"columns not in input: {missing}")
        frame = frame[columns]
    return frame.select_dtypes("number")


def cmd_stats(args) -> int:
    frame = pd.read_csv(args.input)
    if "participant" in frame.columns:
        # table1.csv ends with Mean and SD rows that are not participants
        frame = frame[~frame["participant"].isin(SUMMARY_ROWS)]
    data = _numeric(frame, args.columns)
    if args.kind == "icc":
        complete = data.dropna()
        result = icc_2_1(complete.to_numpy())
        out = {"icc_2_1": result.icc_2_1, "n": result.n, "k": result.k, "columns": list(complete.columns)}
    else:
        if data.shape[1] < 2:
            raise ValueError("Bland-Altman needs two numeric columns")
        pair = data.iloc[:, :2].dropna()
        a, b = pair.columns
        ba = bland_altman(pair[a].to_numpy(), pair[b].to_numpy())
        out = {
            "a": a,
            "b": b,
            "bias": ba.bias_cm,
            "sd": ba.sd_cm,
            "loa_low": ba.loa_low_cm,
            "loa_high": ba.loa_high_cm,
            "n": ba.n,
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpheight", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="process one session manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("study", help="process many sessions and build the agreement tables")
    p.add_argument("--manifests", nargs="+", required=True, help="manifest files and/or directories")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("synth", help="write a synthetic session with known heights")
    p.add_argument("--height-cm", type=float, default=20.0)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--scale", type=float, default=3.5, help="mm per pixel")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--noise-px", type=float, default=0.0)
    p.add_argument("--noise-n", type=float, default=0.0)
    p.add_argument("--noise-mm", type=float, default=0.0)
    p.add_argument("--participant", default="S01")
    p.add_argument("--task", default="Bilateral")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="ICC(2,1) or Bland-Altman on a CSV of heights")
    p.add_argument("kind", choices=("icc", "ba"))
    p.add_argument("--input", required=True)
    p.add_argument("--columns", nargs="+", help="columns to use (default: all numeric)")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (JumpHeightError, OSError, KeyError, ValueError) as exc:
        print(f"jumpheight: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
