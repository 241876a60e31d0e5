"""Auditable wait-free shared-memory objects and their verification harness.

The package provides:

- a shared-memory substrate with atomic read/write/compare&swap/fetch&xor
  cells, backed either by a deterministic simulated scheduler (recording
  step-level traces, enumerating interleavings) or by real threads;
- an auditable multi-writer multi-reader register, an auditable max
  register, an auditable n-component snapshot, and a generic adapter that
  makes any versioned type auditable;
- executable oracles: a linearizability checker, an explicit linearization
  construction, operation classification, effectiveness detection, audit
  accuracy/completeness verdicts, and indistinguishability replay tests;
- a command-line harness for exploration, native stress, and trace checking.
"""

__version__ = "0.1.0"
