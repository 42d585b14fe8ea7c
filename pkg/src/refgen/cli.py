"""Command-line entry point: ``refgen <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 backend failure, 3 partial run.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from .domain import A3DS, AttributeSchema
from .harness import ExperimentConfig, RunRecord, load_records, make_games, run_experiment
from .llm import LlmConfig
from .oracle import PROPOSER_MODES, OracleConfig
from .stats import compare_bootstrap_p, summarize

EXIT_OK, EXIT_USAGE, EXIT_BACKEND, EXIT_PARTIAL = 0, 1, 2, 3

DEFAULTS = {
    "engine": "iterative",
    "n_distractors": [4],
    "n_samples": None,
    "n_games": 100,
    "max_iterations": 5,
    "backend": "oracle",
    "oracle_eval_error": 0.0,
    "oracle_proposer_mode": None,
    "oracle_omission_rate": 0.0,
    "seed": 0,
    "out": None,
    "jobs": 1,
    "trace": False,
    "endpoint": "https://api.openai.com/v1",
    "model": "gpt-3.5-turbo",
    "temperature": 0.1,
    "max_tokens": 512,
    "timeout": 60.0,
    "max_retries": 3,
    "max_in_flight": 4,
    "cache": "off",
    "cache_file": None,
    "schema": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_schema(path: str | None) -> AttributeSchema:
    return AttributeSchema.load(path) if path else A3DS


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with any of the flags below (flags win)")
    p.add_argument("--engine", choices=["iterative", "single_pass", "baseline"], default=S)
    p.add_argument("--n-distractors", type=int, nargs="+", default=S)
    p.add_argument("--n-samples", type=int, nargs="+", default=S,
                   help="proposals per call (default 4 iterative, 10 single-pass)")
    p.add_argument("--n-games", type=int, default=S)
    p.add_argument("--max-iterations", type=int, default=S)
    p.add_argument("--backend", choices=["oracle", "llm"], default=S)
    p.add_argument("--oracle-eval-error", type=float, default=S)
    p.add_argument("--oracle-proposer-mode", choices=PROPOSER_MODES, default=S)
    p.add_argument("--oracle-omission-rate", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S, help="JSONL file to append run records to")
    p.add_argument("--jobs", type=int, default=S)
    p.add_argument("--trace", action="store_true", default=S, help="store the full per-iteration trace")
    p.add_argument("--endpoint", default=S)
    p.add_argument("--model", default=S, help="chat model name")
    p.add_argument("--temperature", type=float, default=S)
    p.add_argument("--max-tokens", type=int, default=S)
    p.add_argument("--timeout", type=float, default=S)
    p.add_argument("--max-retries", type=int, default=S)
    p.add_argument("--max-in-flight", type=int, default=S)
    p.add_argument("--cache", choices=["off", "record", "replay"], default=S)
    p.add_argument("--cache-file", default=S)
    p.add_argument("--schema", default=S, help="JSON attribute schema")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="refgen", description="Contrastive referring expression generation experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-games", help="sample reference games to JSONL")
    p.add_argument("--n-distractors", type=int, default=4)
    p.add_argument("--n-games", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output JSONL (stdout if omitted)")
    p.add_argument("--schema")

    p = sub.add_parser("run", help="run an experiment grid")
    _add_run_flags(p)

    p = sub.add_parser("summarize", help="summary tables from run records")
    p.add_argument("runs", nargs="+")
    p.add_argument("--csv-dir", help="write contrastivity.csv, depth.csv, iterations.csv here")
    p.add_argument("--n-boot", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("compare", help="bootstrapped P that run A beats run B")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--n-boot", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paired", action="store_true", help="resample shared games jointly")

    p = sub.add_parser("replay", help="rerun a recorded LLM run from its cache and check it is identical")
    p.add_argument("run")
    p.add_argument("--cache-file", help="defaults to the cache file recorded in the run")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve-fake", help="serve the symbolic fake chat-completions endpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-error", type=float, default=0.0)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in doc.items():
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            opts[key] = value
    for key in DEFAULTS:
        if hasattr(args, key):
            opts[key] = getattr(args, key)
    for key in ("n_distractors", "n_samples"):
        if opts[key] is not None and not isinstance(opts[key], list):
            opts[key] = [opts[key]]
    return opts


def configs_from_options(opts: dict) -> list[ExperimentConfig]:
    engine = opts["engine"]
    samples = opts["n_samples"] or ([10] if engine == "single_pass" else [4])
    if engine == "baseline":
        samples = [0]
    mode = opts["oracle_proposer_mode"] or ("subsets_le2" if engine == "single_pass" else "single_feature")
    llm = None
    if opts["backend"] == "llm":
        llm = LlmConfig(
            endpoint=opts["endpoint"],
            model=opts["model"],
            temperature=opts["temperature"],
            max_tokens=opts["max_tokens"],
            timeout=opts["timeout"],
            max_retries=opts["max_retries"],
            max_in_flight=opts["max_in_flight"],
            cache=opts["cache"],
            cache_file=opts["cache_file"],
        )
    oracle = OracleConfig(
        seed=opts["seed"],
        eval_error_rate=opts["oracle_eval_error"],
        proposer_mode=mode,
        proposer_omission_rate=opts["oracle_omission_rate"],
    )
    return [
        ExperimentConfig(
            engine=engine,
            n_distractors=d,
            n_samples=n,
            n_games=opts["n_games"],
            max_iterations=opts["max_iterations"],
            backend=opts["backend"],
            oracle=oracle,
            llm=llm,
            seed=opts["seed"],
            output=opts["out"],
            jobs=opts["jobs"],
            trace=opts["trace"],
        )
        for d, n in itertools.product(opts["n_distractors"], samples)
    ]


def _exit_code(records: list[RunRecord]) -> int:
    errors = sum(r.error is not None for r in records)
    if records and errors == len(records):
        return EXIT_BACKEND
    return EXIT_PARTIAL if errors else EXIT_OK


def cmd_generate_games(args) -> int:
    schema = _load_schema(args.schema)
    games = make_games(args.seed, args.n_distractors, args.n_games, schema)
    lines = [g.dumps(schema) for g in games]
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        print("\n".join(lines))
    return EXIT_OK


def _run_all(configs: list[ExperimentConfig], schema: AttributeSchema) -> list[RunRecord]:
    records: list[RunRecord] = []
    for config in configs:
        recs = run_experiment(config, schema, progress=sys.stderr.isatty())
        failed = sum(r.error is not None for r in recs)
        mean = sum(r.gt_contrastivity for r in recs if r.error is None) / max(1, len(recs) - failed)
        print(f"{config.cell}: {len(recs)} games, mean contrastivity {mean:.3f}, {failed} failed")
        records.extend(recs)
    return records


def cmd_run(args) -> int:
    opts = resolve_options(args)
    configs = configs_from_options(opts)
    records = _run_all(configs, _load_schema(opts["schema"]))
    return _exit_code(records)


def _read_many(paths) -> list[dict]:
    out = []
    for path in paths:
        out.extend(json.loads(r.to_json()) for r in load_records(path))
    return out


def cmd_summarize(args) -> int:
    tables = summarize(_read_many(args.runs), n_boot=args.n_boot, seed=args.seed)
    if args.csv_dir:
        d = Path(args.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in tables.to_csv().items():
            (d / f"{name}.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(tables.to_text())
    return EXIT_OK


def cmd_compare(args) -> int:
    a = [r for r in load_records(args.a) if r.error is None]
    b = [r for r in load_records(args.b) if r.error is None]
    if not a or not b:
        raise UsageError("both runs need at least one successful record")
    print("n_distractors  mean_a  mean_b       P    ties")
    for d in sorted({r.n_distractors for r in a} & {r.n_distractors for r in b}):
        ra = {r.game_id: r.gt_contrastivity for r in a if r.n_distractors == d}
        rb = {r.game_id: r.gt_contrastivity for r in b if r.n_distractors == d}
        if args.paired:
            shared = sorted(ra.keys() & rb.keys())
            va, vb = [ra[k] for k in shared], [rb[k] for k in shared]
        else:
            va, vb = list(ra.values()), list(rb.values())
        res = compare_bootstrap_p(va, vb, n_boot=args.n_boot, seed=args.seed, paired=args.paired)
        print(f"{d:13d}  {sum(va) / len(va):6.3f}  {sum(vb) / len(vb):6.3f}  {res.p:6.4f}  {res.ties:6.4f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    original = load_records(args.run)
    if not original:
        raise UsageError(f"no records in {args.run}")
    cells: dict[str, dict] = {}
    for r in original:
        cells.setdefault(r.cell, r.config)
    fresh: list[RunRecord] = []
    for snap in cells.values():
        snap = json.loads(json.dumps(snap))
        if snap.get("backend") != "llm":
            raise UsageError("replay only applies to LLM-backed runs")
        snap["llm"]["cache"] = "replay"
        if args.cache_file:
            snap["llm"]["cache_file"] = args.cache_file
        config = ExperimentConfig(**snap, output=args.out)
        fresh.extend(run_experiment(config))
    want = {(r.cell, r.game_id): r.deterministic() for r in original}
    got = {(r.cell, r.game_id): r.deterministic() for r in fresh}
    mismatched = [k for k in want if want[k] != got.get(k)]
    print(f"replayed {len(got)} games, {len(mismatched)} differ from the recording")
    for cell, game in mismatched[:10]:
        print(f"  differs: {cell} {game}")
    if any(r.error for r in fresh):
        return _exit_code(fresh) or EXIT_PARTIAL
    return EXIT_PARTIAL if mismatched else EXIT_OK


def cmd_serve_fake(args) -> int:
    import uvicorn

    from .fake_server import create_app

    uvicorn.run(create_app(seed=args.seed, eval_error_rate=args.eval_error), host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    "generate-games": cmd_generate_games,
    "run": cmd_run,
    "summarize": cmd_summarize,
    "compare": cmd_compare,
    "replay": cmd_replay,
    "serve-fake": cmd_serve_fake,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        print(f"refgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
