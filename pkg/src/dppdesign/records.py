"""Record statistics of search traces.

An observation is an upper record when it strictly exceeds everything
before it; the first observation is the trivial record.  For i.i.d.
sequences from a continuous distribution the record times, counts and
gaps are distribution-free:

    P(I_n = 1) = 1/n                      (n-th value is a record)
    E N_n = sum 1/i,  Var N_n = sum (1/i)(1 - 1/i)
    P(N_n = j) = S_n^(j) / n!             (unsigned Stirling, first kind)
    P(T_j = n) = (1/n) P(N_{n-1} = j)
    P(gap_j > m) = sum_{i=0..m} C(m,i) (-1)^i (1+i)^(-j)

Discrete-valued traces are jittered with tiny Gaussian noise first so ties
occur with probability zero and the classical model applies.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

from . import streams
from .errors import TieError
from .trace import SampleTrace

_STIRLING_MAX_N = 170
# Alternating binomial sums cancel catastrophically in floats; evaluate
# them in exact rational arithmetic up to this gap size.
_EXACT_GAP_LIMIT = 64


@dataclass(frozen=True)
class JitterConfig:
    """Additive Gaussian noise: sigma is small but strictly positive."""

    sigma: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


class RecordSequence:
    """Records extracted from one trace.

    values/times/subsets describe the records in order; increments[0] is
    the trivial record value itself and gaps has one entry per non-trivial
    record.  trace_iqr is the interquartile range of the source trace,
    kept for reporting layers that need a scale.
    """

    def __init__(self, values, times, subsets, total_observations, trace_iqr):
        vals = np.asarray(values, dtype=np.float64)
        ts = np.asarray(times, dtype=np.int64)
        if vals.size == 0 or vals.size != ts.size:
            raise ValueError("records must be nonempty and aligned")
        if np.any(np.diff(vals) <= 0) or np.any(np.diff(ts) <= 0):
            raise ValueError("record values and times must strictly increase")
        if ts[0] != 1:
            raise ValueError("the first observation is always a record")
        self.values = vals
        self.times = ts
        self.subsets = None if subsets is None else tuple(subsets)
        self.total_observations = int(total_observations)
        self.trace_iqr = float(trace_iqr)
        self.increments = np.concatenate([[vals[0]], np.diff(vals)])
        self.gaps = np.diff(ts)
        for arr in (self.values, self.times, self.increments, self.gaps):
            arr.setflags(write=False)

    @property
    def count(self) -> int:
        return self.values.size

    def count_at(self, n: int) -> int:
        """Number of records among the first n observations."""
        return int(np.searchsorted(self.times, n, side="right"))


def jitter_trace(trace: SampleTrace, cfg: JitterConfig) -> SampleTrace:
    """Add i.i.d. Gaussian(0, sigma^2) noise to every trace value.

    The noise stream depends only on (seed, position), so jittering a
    prefix of a trace gives a prefix of the jittered trace.  Original
    values are retained in raw_values.
    """
    noise = streams.stream(cfg.seed, streams.DOMAIN_JITTER, 0).normal(
        0.0, cfg.sigma, trace.n
    )
    return SampleTrace(
        trace.iterations,
        trace.values + noise,
        trace.subsets,
        raw_values=trace.values,
    )


def extract_records(trace: SampleTrace) -> RecordSequence:
    """Strict running maxima of a trace with pairwise-distinct values."""
    vals = trace.values
    if np.unique(vals).size != vals.size:
        raise TieError("unjittered tie: jitter the trace before extracting records")
    flags = trace.record_flags()
    idx = np.flatnonzero(flags)
    iqr = float(np.quantile(vals, 0.75) - np.quantile(vals, 0.25))
    return RecordSequence(
        vals[idx],
        trace.iterations[idx],
        tuple(trace.subsets[i] for i in idx),
        trace.n,
        iqr,
    )


def expected_record_count(n: int):
    """(mean, variance) of the record count in n i.i.d. observations.

    Exact partial sums of 1/i and (1/i)(1 - 1/i), not the log
    approximation.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    mean = 0.0
    var = 0.0
    chunk = 10**7
    for lo in range(1, n + 1, chunk):
        inv = 1.0 / np.arange(lo, min(lo + chunk, n + 1), dtype=np.float64)
        mean += float(inv.sum())
        var += float((inv * (1.0 - inv)).sum())
    return mean, var


_STIRLING_CACHE: list = [[1]]


def _stirling(n: int, j: int) -> int:
    """Unsigned Stirling number of the first kind, cached row by row."""
    while len(_STIRLING_CACHE) <= n:
        m = len(_STIRLING_CACHE)
        prev = _STIRLING_CACHE[m - 1]
        row = [0] * (m + 1)
        for jj in range(1, m + 1):
            row[jj] = prev[jj - 1] + (m - 1) * (prev[jj] if jj <= m - 1 else 0)
        _STIRLING_CACHE.append(row)
    return _STIRLING_CACHE[n][j] if j <= n else 0


def record_count_pmf(n: int, j: int) -> float:
    """P(exactly j records among n observations).

    Exact big-integer Stirling ratio for n <= 170; the classical
    log(n)^j / (n j!) approximation beyond that.
    """
    if n < 1 or not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= n, got j={j}, n={n}")
    if n <= _STIRLING_MAX_N:
        return float(Fraction(_stirling(n, j), math.factorial(n)))
    return math.exp(
        j * math.log(math.log(n)) - math.log(n) - math.lgamma(j + 1)
    )


def record_time_pmf(kth: int, n: int) -> float:
    """P(the kth non-trivial record occurs at observation n).

    Equals (1/n) P(N_{n-1} = kth); for kth = 1 the closed form
    1/(n(n-1)) is used so arbitrarily large n stays exact.
    """
    if kth < 1 or n < kth + 1:
        raise ValueError(f"need n >= kth+1 >= 2, got kth={kth}, n={n}")
    if kth == 1:
        return 1.0 / (n * (n - 1.0))
    return record_count_pmf(n - 1, kth) / n


def inter_record_time_tail(kth: int, j: int) -> float:
    """P(gap after the (kth-1)-th record exceeds j).

    Exact rational alternating sum for j <= 64; for larger j the float
    alternating sum cancels, so the equivalent integral is used instead:
    conditioning on the previous record value (a Gamma(kth) variable for
    unit-exponential data) gives
    int_0^inf x^(kth-1)/Gamma(kth) e^-x (1-e^-x)^j dx.
    """
    if kth < 1:
        raise ValueError(f"kth must be >= 1, got {kth}")
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    if j == 0:
        return 1.0
    if j <= _EXACT_GAP_LIMIT:
        total = Fraction(0)
        for m in range(j + 1):
            total += Fraction((-1) ** m * math.comb(j, m), (1 + m) ** kth)
        return float(total)

    lg = math.lgamma(kth)

    def integrand(x):
        if x <= 0.0:
            return 0.0
        return math.exp(
            (kth - 1) * math.log(x) - x + j * math.log1p(-math.exp(-x)) - lg
        )

    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=200)
    return float(val)


def inter_record_time_pmf(kth: int, j: int) -> float:
    """P(gap after the (kth-1)-th record equals j), j >= 1."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if j - 1 <= _EXACT_GAP_LIMIT:
        total = Fraction(0)
        for m in range(j):
            total += Fraction((-1) ** m * math.comb(j - 1, m), (2 + m) ** kth)
        return float(total)
    return inter_record_time_tail(kth, j - 1) - inter_record_time_tail(kth, j)


def record_value_pdf(dist, d: int, r: float) -> float:
    """Density of the d-th record value under reference distribution dist.

    dist must expose cdf/pdf; the density is
    f(r) * (-log(1 - F(r)))^d / d!, zero by convention where F(r) = 1.
    """
    if d < 0:
        raise ValueError(f"record index must be >= 0, got {d}")
    fr = float(dist.cdf(r))
    if fr >= 1.0:
        return 0.0
    dens = float(dist.pdf(r))
    if d == 0:
        return dens
    s = -math.log1p(-fr)
    if s == 0.0:
        return 0.0
    return dens * math.exp(d * math.log(s) - math.lgamma(d + 1))


RECORD_LOG_HEADER = "d,record_value,record_time,gap,increment,subset"


def write_record_log(records: RecordSequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(RECORD_LOG_HEADER + "\n")
        for d in range(records.count):
            gap = "" if d == 0 else str(int(records.gaps[d - 1]))
            sub = ""
            if records.subsets is not None:
                sub = ";".join(str(i) for i in records.subsets[d])
            fh.write(
                f"{d},{records.values[d]:.17g},{records.times[d]},"
                f"{gap},{records.increments[d]:.17g},{sub}\n"
            )
