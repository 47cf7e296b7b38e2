"""Command-line front end: single decodes and experiment grids."""

from __future__ import annotations

import argparse
import sys
import time
from typing import List, Optional

from . import engine, metrics
from .kvcache import parse_cache
from .oracle import OracleDenoiser, exact_match_rate
from .samplers import parse_sampler
from .schedulers import parse_scheduler


def _read_prompt(path: str) -> List[int]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    tokens = [int(part) for part in text.split()]
    if not tokens:
        raise ValueError(f"prompt file {path} contains no token ids")
    return tokens


def _cmd_decode(args: argparse.Namespace) -> int:
    denoiser = engine.build_denoiser(args.denoiser)
    scheduler = parse_scheduler(args.scheduler)
    sampler = parse_sampler(args.sampler)
    cache = parse_cache(args.cache)
    prompt = _read_prompt(args.prompt_file)

    started = time.perf_counter()
    result = engine.decode(
        denoiser, scheduler, sampler, cache, prompt, args.gen_len, eos_id=args.eos_id
    )
    elapsed = time.perf_counter() - started

    if args.trace:
        engine.write_trace(result.records, args.trace)
    if args.csv:
        row = {
            "scheduler": args.scheduler,
            "sampler": args.sampler,
            "cache": args.cache,
            "denoiser": args.denoiser,
            "seed": "",
        }
        row.update(
            metrics.run_stats(result.records, len(prompt) + args.gen_len, args.premature_floor)
        )
        if isinstance(denoiser, OracleDenoiser):
            row["exact_match"] = exact_match_rate(result.records, denoiser.profile, len(prompt))
        else:
            row["exact_match"] = None
        row["wall_time_s"] = elapsed
        metrics.write_csv([row], args.csv, metrics.ROW_COLUMNS)

    print(f"steps={result.steps} commits={result.state.decoded_count} "
          f"wall_time_s={elapsed:.4f} early_stopped={result.early_stopped}")
    print("response:", " ".join(str(int(t)) for t in result.response))
    return 0


def _cmd_grid(args: argparse.Namespace) -> int:
    spec = engine.parse_grid_file(args.config)
    rows = engine.run_grid(spec)
    metrics.write_csv(rows, args.csv, metrics.ROW_COLUMNS)
    if args.summary:
        print(metrics.format_table(metrics.summarize(rows)), end="")
    else:
        print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsb",
        description="Sliding-block decoding engine for masked-diffusion language models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decode", help="run one decode and dump trace/metrics")
    dec.add_argument("--scheduler", required=True, help="naive:B=32 | dsb:init=32,max=32 | dsb:init=32,max=unbounded")
    dec.add_argument("--sampler", required=True, help="vanilla | threshold:tau=0.9")
    dec.add_argument("--cache", required=True, help="nocache | dual | dsbcache:pmin=24,suffix=0")
    dec.add_argument("--denoiser", required=True, help="toy:seed=42 | oracle:profile=p.txt")
    dec.add_argument("--prompt-file", required=True, help="whitespace-separated token ids")
    dec.add_argument("--gen-len", type=int, default=256)
    dec.add_argument("--trace", help="write one JSON step record per line here")
    dec.add_argument("--csv", help="write the metrics row here")
    dec.add_argument("--eos-id", type=int, default=None,
                     help="stop early once this token is committed with a decoded prefix")
    dec.add_argument("--premature-floor", type=float, default=0.5)
    dec.set_defaults(func=_cmd_decode)

    grid = sub.add_parser("grid", help="run every cell of a grid config file")
    grid.add_argument("--config", required=True)
    grid.add_argument("--csv", required=True)
    grid.add_argument("--summary", action="store_true", help="print the per-config summary table")
    grid.set_defaults(func=_cmd_grid)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
