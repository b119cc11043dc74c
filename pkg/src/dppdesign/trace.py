"""Objective traces produced by the stochastic searches.

A trace is an ordered sequence of (iteration, objective value, subset)
entries whose running maximum is the best-so-far curve.  Traces round-trip
through CSV with 17-significant-digit values so files parse losslessly.
"""

import numpy as np

from .errors import InputFormatError

TRACE_HEADER = "iteration,log_det,is_record,subset"


class SampleTrace:
    """Ordered objective evaluations; iterations start at 1 and increase."""

    def __init__(self, iterations, values, subsets, raw_values=None):
        it = np.asarray(iterations, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        if it.size == 0:
            raise ValueError("trace must be nonempty")
        if it.size != vals.size or len(subsets) != it.size:
            raise ValueError("trace columns disagree in length")
        if it[0] != 1 or np.any(np.diff(it) <= 0):
            raise ValueError("iterations must increase strictly from 1")
        self.iterations = it
        self.values = vals
        self.subsets = tuple(tuple(int(i) for i in s) for s in subsets)
        if raw_values is not None:
            raw_values = np.asarray(raw_values, dtype=np.float64)
            if raw_values.size != vals.size:
                raise ValueError("raw values length mismatch")
            raw_values.setflags(write=False)
        self.raw_values = raw_values
        it.setflags(write=False)
        vals.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate(self.values)

    def record_flags(self) -> np.ndarray:
        """True where the value strictly exceeds every earlier value."""
        flags = np.empty(self.n, dtype=bool)
        flags[0] = True
        if self.n > 1:
            running = np.maximum.accumulate(self.values)
            flags[1:] = self.values[1:] > running[:-1]
        return flags

    def best(self):
        """(iteration, value, subset) of the first attainment of the maximum."""
        i = int(np.argmax(self.values))
        return int(self.iterations[i]), float(self.values[i]), self.subsets[i]

    def __len__(self):
        return self.n


def write_trace(trace: SampleTrace, path) -> None:
    flags = trace.record_flags()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRACE_HEADER + "\n")
        for it, val, flag, sub in zip(
            trace.iterations, trace.values, flags, trace.subsets
        ):
            joined = ";".join(str(i) for i in sub)
            fh.write(f"{it},{val:.17g},{int(flag)},{joined}\n")


def read_trace(path) -> SampleTrace:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise InputFormatError(f"cannot read {path}: {exc}") from None
    if not lines or lines[0] != TRACE_HEADER:
        raise InputFormatError(f"not a trace file (bad header): {path}")
    if len(lines) == 1:
        raise InputFormatError(f"empty trace: {path}")
    iterations, values, subsets = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise InputFormatError(f"malformed trace row: {ln!r}")
        try:
            iterations.append(int(parts[0]))
            values.append(float(parts[1]))
            subsets.append(tuple(int(s) for s in parts[3].split(";") if s))
        except ValueError:
            raise InputFormatError(f"malformed trace row: {ln!r}") from None
    return SampleTrace(iterations, values, subsets)
