"""Command-line front end.

Three subcommands:

- ``explore``: enumerate (or sample) interleavings of a scripted
  configuration under the simulated scheduler, run every applicable oracle,
  and print a summary report;
- ``stress``: timed random workload over real threads with the native
  monotonicity, audit-cumulativity and windowed-linearizability checks;
- ``check``: parse a recorded trace file and run selected oracles on it.

Output is line-oriented for scripting: ``report <key> <value>`` records and
``verdict <oracle> <status> <detail>`` records.  Exit status is 0 only when
every applied oracle passed.  For a fixed configuration and seed the
``explore`` output is byte-identical across runs (timing goes to stderr).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from collections import Counter
from pathlib import Path

from .explore import explore, leaf_verdicts, sample_many
from .pads import DEFAULT_TEST_SEED
from .replay import applicable_targets, replay_uncompromised
from .stress import run_stress
from .substrate import parse_trace, run_schedule
from .systems import default_scripts, make_system, parse_script
from .verify import (LIN_BUDGET, Verdict, check_linearizable,
                     check_trace_linearizable, construct_from_trace,
                     construct_linearization, spec_for_trace_meta,
                     trace_invariant_violations, verify_audit)

CHECK_ORACLES = ("invariants", "audit", "linearizable", "construction",
                 "replay")


def _seed_from(args) -> int:
    env = os.environ.get("AUD_SEED")
    if env is not None:
        return int(env, 16)
    if args.seed is not None:
        return int(args.seed, 16)
    return DEFAULT_TEST_SEED


def _scripts_from(args) -> dict:
    if args.script:
        text = Path(args.script).read_text()
        return parse_script(text)
    return default_scripts(args.object, writers=args.writers,
                           readers=args.readers, auditors=args.auditors)


def _emit(out, key, value) -> None:
    print(f"report {key} {value}", file=out)


def cmd_explore(args) -> int:
    seed = _seed_from(args)
    scripts = _scripts_from(args)
    kind = args.object
    components = args.components if kind == "snapshot" else None

    def factory():
        return make_system(kind, scripts, seed=seed, components=components)

    meta = factory().meta
    t0 = time.monotonic()
    counts: Counter = Counter()
    failures: list[tuple] = []  # (schedule, verdict)
    max_iters = 0
    traces = 0

    if args.samples:
        for schedule, ana in sample_many(factory, args.samples, seed,
                                         max_steps=args.max_steps):
            traces += 1
            max_iters = max(max_iters, ana.max_write_iters)
            for oracle, detail in ana.violations:
                counts[("trace_invariants", "fail")] += 1
                failures.append((tuple(schedule),
                                 Verdict("trace_invariants", "fail", detail)))
            if not ana.violations:
                counts[("trace_invariants", "pass")] += 1
            spec = spec_for_trace_meta(meta)
            v1 = check_linearizable(ana.facts(), spec, args.lin_budget)
            _order, v2 = construct_linearization(ana.facts(), ana.lin,
                                                 kind, spec)
            for v in (v1, v2):
                counts[(v.oracle, v.status)] += 1
                if v.status == "fail":
                    failures.append((tuple(schedule), v))
    else:
        result = explore(factory, max_steps=args.max_steps,
                         preemption_bound=args.preemptions)
        traces = result.paths
        max_iters = result.max_write_iters
        _emit(sys.stdout, "distinct_histories", len(result.leaves))
        _emit(sys.stdout, "explored_nodes", result.nodes)
        for (oracle, detail), prefix in result.violations:
            counts[("trace_invariants", "fail")] += 1
            failures.append((prefix, Verdict("trace_invariants", "fail",
                                             detail)))
        if not result.violations:
            counts[("trace_invariants", "pass")] += 1
        for schedule, v1, v2 in leaf_verdicts(result, meta,
                                              budget=args.lin_budget):
            for v in (v1, v2):
                counts[(v.oracle, v.status)] += 1
                if v.status == "fail":
                    failures.append((schedule, v))

    _emit(sys.stdout, "object", kind)
    _emit(sys.stdout, "seed", f"{seed:#x}")
    _emit(sys.stdout, "traces", traces)
    _emit(sys.stdout, "max_write_iters", max_iters)
    _emit(sys.stdout, "phase_violations",
          counts[("trace_invariants", "fail")])
    for (oracle, status), n in sorted(counts.items()):
        _emit(sys.stdout, f"verdicts.{oracle}.{status}", n)

    oracles = sorted({o for (o, _s) in counts})
    failed = False
    for oracle in oracles:
        bad = [v for _s, v in failures if v.oracle == oracle]
        if bad:
            failed = True
            print(bad[0].line())
        elif counts[(oracle, "inconclusive")]:
            print(Verdict(oracle, "inconclusive", "budget exceeded").line())
        else:
            print(Verdict(oracle, "pass",
                          f"{counts[(oracle, 'pass')]} checks").line())

    if args.out and failures:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, (schedule, v) in enumerate(failures[:50]):
            system = factory()
            trace = run_schedule(system, schedule, lenient=True)
            path = outdir / f"failing-{i:03d}.trace"
            path.write_text(trace.serialize())
            print(f"failing trace {path}: {v.line()}", file=sys.stderr)

    print(f"wall {time.monotonic() - t0:.2f}s", file=sys.stderr)
    return 1 if failed else 0


def cmd_stress(args) -> int:
    seed = _seed_from(args)
    t0 = time.monotonic()
    rep = run_stress(writers=args.writers, readers=args.readers,
                     auditors=args.auditors, seconds=args.seconds, seed=seed)
    for name in sorted(rep.ops):
        _emit(sys.stdout, f"ops.{name}", rep.ops[name])
    _emit(sys.stdout, "max_write_iters", rep.max_write_iters)
    _emit(sys.stdout, "windows_checked", rep.windows)
    _emit(sys.stdout, "violations", len(rep.violations))
    _emit(sys.stdout, "deadlocked", str(rep.deadlocked).lower())
    for oracle in ("phase", "audit_monotone", "write_wait_free",
                   "window_linearizable"):
        bad = [d for o, d in rep.violations if o == oracle]
        if bad:
            print(Verdict(oracle, "fail", bad[0]).line())
        else:
            print(Verdict(oracle, "pass").line())
    status = "fail" if rep.deadlocked else "pass"
    print(Verdict("no_deadlock", status).line())
    print(f"wall {time.monotonic() - t0:.2f}s", file=sys.stderr)
    return 0 if rep.ok else 1


def cmd_check(args) -> int:
    try:
        trace = parse_trace(Path(args.trace).read_text())
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    wanted = args.oracles.split(",") if args.oracles else list(CHECK_ORACLES)
    for name in wanted:
        if name not in CHECK_ORACLES:
            print(f"error: unknown oracle {name!r} "
                  f"(choose from {', '.join(CHECK_ORACLES)})", file=sys.stderr)
            return 2
    verdicts: list[Verdict] = []
    if "invariants" in wanted:
        bad = trace_invariant_violations(trace)
        if bad:
            verdicts.append(Verdict("trace_invariants", "fail",
                                    f"{bad[0][0]}: {bad[0][1]}"))
        else:
            verdicts.append(Verdict("trace_invariants", "pass"))
    if "audit" in wanted:
        verdicts.append(verify_audit(trace))
    if "linearizable" in wanted:
        verdicts.append(check_trace_linearizable(trace,
                                                 budget=args.lin_budget))
    if "construction" in wanted:
        _order, v = construct_from_trace(trace)
        verdicts.append(v)
    if "replay" in wanted:
        picked = None
        for obs, target in applicable_targets(trace):
            v = replay_uncompromised(trace, obs, target)
            if v.status == "fail":
                picked = v
                break
            if v.status == "pass" and picked is None:
                picked = v
        verdicts.append(picked if picked is not None
                        else Verdict("replay_uncompromised", "n/a",
                                     "no applicable transformation"))
    for v in verdicts:
        print(v.line())
    _emit(sys.stdout, "oracles", len(verdicts))
    _emit(sys.stdout, "failures",
          sum(1 for v in verdicts if v.status == "fail"))
    return 1 if any(v.status == "fail" for v in verdicts) else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="auditmem",
        description="Auditable shared-memory objects: exploration, native "
                    "stress, and trace checking.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", help="hex seed (env AUD_SEED overrides)")

    pe = sub.add_parser("explore", help="enumerate or sample interleavings")
    common(pe)
    pe.add_argument("--object", default="register",
                    choices=["register", "maxreg", "snapshot", "counter",
                             "clock"])
    pe.add_argument("--writers", type=int, default=1)
    pe.add_argument("--readers", type=int, default=1)
    pe.add_argument("--auditors", type=int, default=0)
    pe.add_argument("--components", type=int, default=None,
                    help="snapshot component count (default: one per writer)")
    pe.add_argument("--script", help="op-per-line script file: 'p0 write 5'")
    pe.add_argument("--max-steps", type=int, default=None)
    pe.add_argument("--preemptions", type=int, default=None)
    pe.add_argument("--samples", type=int, default=None,
                    help="sample this many random schedules instead of "
                         "enumerating")
    pe.add_argument("--lin-budget", type=int, default=LIN_BUDGET)
    pe.add_argument("--out", help="directory for failing traces")
    pe.set_defaults(func=cmd_explore)

    ps = sub.add_parser("stress", help="timed run over real threads")
    common(ps)
    ps.add_argument("--writers", type=int, default=2)
    ps.add_argument("--readers", type=int, default=2)
    ps.add_argument("--auditors", type=int, default=1)
    ps.add_argument("--seconds", type=float, default=10.0)
    ps.set_defaults(func=cmd_stress)

    pc = sub.add_parser("check", help="run oracles on a recorded trace")
    common(pc)
    pc.add_argument("trace", help="trace file (format v1)")
    pc.add_argument("--oracles",
                    help="comma-separated subset of: "
                         + ",".join(CHECK_ORACLES))
    pc.add_argument("--lin-budget", type=int, default=LIN_BUDGET)
    pc.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
