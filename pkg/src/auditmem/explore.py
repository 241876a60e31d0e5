"""Interleaving exploration: exhaustive within bounds, or sampled.

The exhaustive explorer walks the schedule tree depth-first, snapshotting
the system and the analyzer at every branch.  Interleavings that reach an
identical joint state (memory words, per-process machine state, analyzer
facts) share their entire future, so the walk memoizes on that state and
each distinct suffix is explored once.  Path counts are recovered by
dynamic programming over the memo table, and every distinct terminal
history keeps one witness schedule so it can be re-run and recorded in
full.

Invariant violations (phases, step bounds, audit-versus-effective) are
detected by the analyzer edge by edge; since every reachable edge of the
DAG executes at least once, the incremental checks lose nothing to the
memoization.
"""

from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from hashlib import blake2b

from .substrate import step_process
from .verify import (Analyzer, LIN_BUDGET, Verdict, analyzer_for_system,
                     check_linearizable, construct_linearization,
                     spec_for_trace_meta)


def canon_repr(x) -> str:
    """Deterministic textual form: sets are sorted, so equal values always
    serialize identically (plain repr orders set elements by hash seed)."""
    if isinstance(x, (frozenset, set)):
        return "{" + ",".join(sorted(canon_repr(e) for e in x)) + "}"
    if isinstance(x, tuple):
        return "(" + ",".join(canon_repr(e) for e in x) + ")"
    if isinstance(x, list):
        return "[" + ",".join(canon_repr(e) for e in x) + "]"
    if isinstance(x, dict):
        return "<" + ",".join(sorted(canon_repr(k) + ":" + canon_repr(v)
                                     for k, v in x.items())) + ">"
    if dataclasses.is_dataclass(x):
        return type(x).__name__ + canon_repr(
            tuple(getattr(x, f.name) for f in dataclasses.fields(x)))
    return repr(x)


def state_digest(x) -> bytes:
    """16-byte digest of a canonical serialization; used as a compact memo
    key so the explored state table stays within memory."""
    return blake2b(canon_repr(x).encode(), digest_size=16).digest()


@dataclass
class ExploreResult:
    paths: int  # number of complete schedules within the bounds
    leaves: dict  # terminal history key -> (witness schedule, facts, lin)
    violations: list  # ((oracle, detail), witness schedule prefix)
    nodes: int
    max_write_iters: int

    @property
    def ok(self) -> bool:
        return not self.violations


def explore(make_system, *, max_steps: int | None = None,
            preemption_bound: int | None = None,
            track_history: bool = True) -> ExploreResult:
    """Exhaustively explore all interleavings within the bounds.

    With ``track_history`` the memo key includes the full per-operation
    history, so every distinct terminal history appears in ``leaves`` with
    a witness schedule (needed by the schedule-level oracles).  Without it
    the memo key is the joint machine state alone: the walk still covers
    every reachable state transition, so the analyzer's incremental checks
    and the path count stay exact, but terminal histories are not
    collected.  Use the cheaper mode for configurations whose histories
    diverge too much to share.
    """
    system = make_system()
    ana = analyzer_for_system(system)
    observer = lambda ev, proc: ana.feed(ev)
    memo: dict = {}
    leaves: dict = {}
    violations: list = []
    path: list[int] = []

    def node_key(last_pid, preempt):
        k = (system.memory.state_key(),
             tuple(p.state_key() for p in system.processes))
        if track_history:
            k += (ana.key(),)
        if preemption_bound is not None:
            k += (last_pid, preempt)
        if max_steps is not None:
            k += (len(path),)
        return state_digest(k)

    def walk(last_pid, preempt) -> int:
        runnable = [p.pid for p in system.processes if p.runnable()]
        if not runnable or (max_steps is not None and len(path) >= max_steps):
            if track_history:
                lk = state_digest(ana.leaf_key())
                if lk not in leaves:
                    leaves[lk] = (tuple(path), ana.facts(), ana.lin)
            return 1
        key = node_key(last_pid, preempt)
        cached = memo.get(key)
        if cached is not None:
            return cached
        total = 0
        for pid in runnable:
            cost = preempt
            if last_pid is not None and pid != last_pid and last_pid in runnable:
                cost += 1
                if preemption_bound is not None and cost > preemption_bound:
                    continue
            ssnap = system.snapshot()
            asnap = ana.snapshot()
            seen = len(ana.violations)
            path.append(pid)
            step_process(system, system.proc(pid), None, observer)
            if len(ana.violations) > seen:
                for v in ana.violations[seen:]:
                    violations.append((v, tuple(path)))
            total += walk(pid, cost)
            path.pop()
            system.restore(ssnap)
            ana.restore(asnap)
        memo[key] = total
        return total

    paths = walk(None, 0)
    return ExploreResult(paths, leaves, violations, len(memo),
                         ana.max_write_iters)


def leaf_verdicts(result: ExploreResult, meta: dict,
                  budget: int = LIN_BUDGET):
    """Run the schedule-level oracles once per distinct terminal history.

    Yields (witness schedule, linearizability verdict, construction
    verdict) triples.
    """
    spec = spec_for_trace_meta(meta)
    kind = meta["object"]
    for _key, (schedule, facts, lin) in sorted(result.leaves.items(),
                                               key=lambda kv: kv[1][0]):
        v1 = check_linearizable(facts, spec, budget)
        _order, v2 = construct_linearization(facts, lin, kind, spec)
        yield schedule, v1, v2


def sample_run(make_system, rng: random.Random,
               max_steps: int | None = None) -> tuple[list[int], Analyzer]:
    """One uniformly random maximal (or step-bounded) schedule, analyzed."""
    system = make_system()
    ana = analyzer_for_system(system)
    observer = lambda ev, proc: ana.feed(ev)
    schedule: list[int] = []
    while True:
        runnable = [p.pid for p in system.processes if p.runnable()]
        if not runnable or (max_steps is not None
                            and len(schedule) >= max_steps):
            break
        pid = rng.choice(runnable)
        schedule.append(pid)
        step_process(system, system.proc(pid), None, observer)
    return schedule, ana


def sample_many(make_system, samples: int, seed: int,
                max_steps: int | None = None):
    """Yield (schedule, analyzer) for ``samples`` random schedules drawn
    from a deterministic stream seeded with ``seed``."""
    rng = random.Random(seed)
    for _ in range(samples):
        yield sample_run(make_system, rng, max_steps)
