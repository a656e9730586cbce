"""Command-line harness: serial-vs-parallel runs with root verification,
cooperative crash injection tests, and a benchmark sweep."""

from __future__ import annotations

import argparse
import os
import random
import sys
import time
from dataclasses import replace

from .executor import ParallelEngine, SerialEngine, Block
from .kvstore import open_store
from .metrics import BENCH_COLUMNS, RUN_COLUMNS, SCHEMA_VERSION, CsvWriter, RunMetrics
from .pipeline import CrashSimulated
from .statedb import CommitConfig, StateDB
from .workload import WorkloadSpec, gen_block, genesis

EXIT_OK = 0
EXIT_IO = 1
EXIT_MISMATCH = 2


def _load_spec(args) -> WorkloadSpec:
    spec = WorkloadSpec.from_file(args.config) if args.config else WorkloadSpec()
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed=args.seed)
    return spec


def _commit_config(args, spec: WorkloadSpec) -> CommitConfig:
    return CommitConfig(
        alpha=args.alpha,
        mu=args.mu,
        block_size=spec.block_size,
        workers=args.workers,
        retrieval_threads=args.retrieval_threads,
        commit_threads=args.commit_threads,
    )


def _new_db(args, spec: WorkloadSpec, cfg: CommitConfig, tag: str) -> StateDB:
    if args.backend == "file":
        os.makedirs(args.db_dir, exist_ok=True)
        store = open_store("file", os.path.join(args.db_dir, f"{tag}.log"))
    else:
        store = open_store("memory")
    db = StateDB(store, cfg)
    genesis(spec, db)
    return db


def cmd_run(args) -> int:
    spec = _load_spec(args)
    cfg = _commit_config(args, spec)
    engines = [e.strip() for e in args.engines.split(",") if e.strip()]
    for engine in engines:
        if engine not in ("serial", "parallel"):
            print(f"unknown engine {engine!r}", file=sys.stderr)
            return EXIT_IO
    try:
        out = CsvWriter(args.out, RUN_COLUMNS)
    except OSError as exc:
        print(f"cannot open {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    dbs = {tag: _new_db(args, spec, cfg, tag) for tag in engines}
    status = EXIT_OK
    try:
        for height in range(1, args.blocks + 1):
            block = gen_block(spec, height)
            roots = {}
            for tag in engines:
                db = dbs[tag]
                before = db.counters.snapshot()
                waste_before = db.account_trie.early_rehash_total
                start = time.perf_counter()
                if tag == "serial":
                    root, stats = SerialEngine(db).run_block(block)
                else:
                    engine = ParallelEngine(db, skip_abort_check=args.inject_skip_abort_check)
                    root, stats = engine.run_block(block)
                elapsed_ms = (time.perf_counter() - start) * 1000
                after = db.counters.snapshot()
                roots[tag] = root
                out.write(RunMetrics(
                    block_height=height,
                    engine=tag,
                    wall_clock_ms=round(elapsed_ms, 3),
                    committed_tx=stats["committed"],
                    aborted_tx=stats["aborted"],
                    batches=stats["batches"],
                    node_db_reads=after["node_db_reads"] - before["node_db_reads"],
                    node_db_writes=after["node_db_writes"] - before["node_db_writes"],
                    direct_db_reads=after["direct_db_reads"] - before["direct_db_reads"],
                    early_hash_waste=db.account_trie.early_rehash_total - waste_before,
                    final_root=root.hex(),
                ).row())
            if len(set(roots.values())) > 1:
                print(f"root mismatch at height {height}: "
                      + ", ".join(f"{t}={r.hex()}" for t, r in roots.items()),
                      file=sys.stderr)
                status = EXIT_MISMATCH
                break
    finally:
        out.close()
    return status


def run_crash_trial(spec: WorkloadSpec, cfg: CommitConfig, crash_point: str,
                    crash_height: int, offset: int) -> bool:
    """One cooperative crash injection; True when the replayed root matches
    the crash-free reference run."""
    # crash-free reference
    ref_db = StateDB(open_store("memory"), cfg)
    genesis(spec, ref_db)
    ref_root = None
    for height in range(1, crash_height + 1):
        ref_root, _ = ParallelEngine(ref_db).run_block(gen_block(spec, height))

    # crashing run on its own store
    db = StateDB(open_store("memory"), cfg)
    store = db.store
    genesis(spec, db)
    for height in range(1, crash_height):
        ParallelEngine(db).run_block(gen_block(spec, height))

    fired = {"n": 0}
    site = {"mid-store": "mid-store", "mid-hash": "mid-hash",
            "post-meta": "post-meta"}[crash_point]

    def hook(at: str) -> bool:
        if at != site:
            return False
        fired["n"] += 1
        return fired["n"] > offset

    block = gen_block(spec, crash_height)
    try:
        root, _ = ParallelEngine(db).run_block(block, crash_hook=hook)
        crashed = False
    except CrashSimulated:
        crashed = True

    if not crashed:
        # halt offset beyond the block's work: behaves like a clean run
        return root == ref_root

    # volatile state is gone; reopen over the surviving store and recover
    db2 = StateDB(store, cfg)
    if db2.latest_height() == crash_height:
        # post-meta: the root record is durable, replay is skipped
        root = db2.account_trie.root_digest()
    else:
        db2.recover(crash_height - 1)
        root, _ = ParallelEngine(db2).run_block(block)
    return root == ref_root


def cmd_crash_test(args) -> int:
    spec = _load_spec(args)
    cfg = _commit_config(args, spec)
    rng = random.Random(args.seed if args.seed is not None else spec.seed)
    failures = 0
    for trial in range(args.repeat):
        offset = rng.randrange(0, max(1, args.max_offset))
        ok = run_crash_trial(spec, cfg, args.crash_point, args.height, offset)
        print(f"trial {trial}: crash_point={args.crash_point} offset={offset} "
              f"{'ok' if ok else 'MISMATCH'}")
        if not ok:
            failures += 1
    return EXIT_OK if failures == 0 else EXIT_MISMATCH


def cmd_bench(args) -> int:
    spec = _load_spec(args)
    try:
        out = CsvWriter(args.out, BENCH_COLUMNS)
    except OSError as exc:
        print(f"cannot open {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        for theta in (0.0, 0.8, 1.2):
            base_tps = None
            for workers in (1, 2, 4, 8):
                sweep_spec = replace(spec, zipf_theta=theta)
                cfg = CommitConfig(alpha=args.alpha, mu=args.mu,
                                   block_size=sweep_spec.block_size,
                                   workers=workers,
                                   retrieval_threads=args.retrieval_threads,
                                   commit_threads=args.commit_threads)
                db = StateDB(open_store("memory"), cfg)
                genesis(sweep_spec, db)
                committed = aborted = 0
                start = time.perf_counter()
                for height in range(1, args.blocks + 1):
                    _, stats = ParallelEngine(db).run_block(gen_block(sweep_spec, height))
                    committed += stats["committed"]
                    aborted += stats["aborted"]
                elapsed = time.perf_counter() - start
                trie = db.account_trie
                waste = round(
                    trie.early_rehash_total / max(1, trie.early_hash_total), 4)
                tps = committed / elapsed if elapsed > 0 else 0.0
                if workers == 1:
                    base_tps = tps
                out.write([SCHEMA_VERSION, workers, theta, args.blocks, committed,
                           round(elapsed * 1000, 3), round(tps, 2),
                           round(aborted / max(1, committed + aborted), 4),
                           waste, round(tps / base_tps, 3)])
    finally:
        out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockexec")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="workload config file (key = value lines)")
        p.add_argument("--workers", type=int, default=4)
        p.add_argument("--retrieval-threads", type=int, default=2)
        p.add_argument("--commit-threads", type=int, default=2)
        p.add_argument("--alpha", type=float, default=0.9)
        p.add_argument("--mu", type=float, default=2.0)
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", choices=["memory", "file"], default="memory")
        p.add_argument("--db-dir", default="blockexec-db")

    run = sub.add_parser("run", help="execute generated blocks, verify roots")
    common(run)
    run.add_argument("--engines", default="serial,parallel")
    run.add_argument("--blocks", type=int, default=10)
    run.add_argument("--out", default="run.csv")
    run.add_argument("--inject-skip-abort-check", action="store_true",
                     help="negative test: disable conflict validation")
    run.set_defaults(func=cmd_run)

    crash = sub.add_parser("crash-test", help="crash injection and replay check")
    common(crash)
    crash.add_argument("--crash-point", required=True,
                       choices=["mid-store", "mid-hash", "post-meta"])
    crash.add_argument("--height", type=int, default=2,
                       help="block during which the crash is injected")
    crash.add_argument("--repeat", type=int, default=1)
    crash.add_argument("--max-offset", type=int, default=40,
                       help="upper bound for randomized halt offsets")
    crash.set_defaults(func=cmd_crash_test)

    bench = sub.add_parser("bench", help="worker/skew sweep to CSV")
    common(bench)
    bench.add_argument("--blocks", type=int, default=3)
    bench.add_argument("--out", default="bench.csv")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
