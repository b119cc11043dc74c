"""Exact fixed-size determinantal point process sampling.

Sampling works in two phases.  Phase one picks which k eigenvectors span
the projection process, walking the eigenvalues against a table of
elementary symmetric polynomials: eigenvalue m is kept with probability
lambda_m * e_{k-1}(first m-1) / e_k(first m).  Phase two samples items one
at a time from the projection kernel, selecting item i with probability
(1/|V|) * sum_v (v^T e_i)^2 and then replacing V with an orthonormal basis
for the part of span(V) orthogonal to coordinate i.

Subset probabilities are proportional to the determinant of the kernel's
principal submatrix, normalized over all subsets of the same cardinality;
`exact_k_dpp_pmf` evaluates that law by full enumeration at desk scale.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import CombinatorialBudgetError, NumericError, RankDeficientError
from .kernels import EigenSystem, KernelMatrix

_PMF_BUDGET = 10**6
# Rescale eigenvalues when the top-degree polynomial could leave double range.
_OVERFLOW_LIMIT = 1e300


class ElementarySymmetricTable:
    """e[m][j] = j-th elementary symmetric polynomial of the first m eigenvalues.

    When overflow forces rescaling by `scale`, table[m][j] holds the
    polynomial of the rescaled eigenvalues and value(m, j) restores the
    true magnitude.  The acceptance ratios used in sampling are invariant
    under that rescaling.
    """

    def __init__(self, table: np.ndarray, scale: float):
        self.table = table
        self.scale = scale
        table.setflags(write=False)

    @property
    def n(self) -> int:
        return self.table.shape[0] - 1

    @property
    def k(self) -> int:
        return self.table.shape[1] - 1

    def value(self, m: int, j: int) -> float:
        return float(self.table[m, j]) * self.scale**j

    def _rows(self) -> list:
        # Python-list view of the table; scalar indexing in the sampler's
        # inner loop is much faster on lists than on numpy arrays.
        if not hasattr(self, "_rows_cache"):
            self._rows_cache = self.table.tolist()
        return self._rows_cache


@dataclass(frozen=True)
class DppSample:
    """One sampled subset; seed_state identifies the stream that produced it."""

    indices: tuple
    seed_state: object = None

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))


def elementary_table(eigenvalues, k: int) -> ElementarySymmetricTable:
    """Tabulate elementary symmetric polynomials up to degree k."""
    lam = np.asarray(eigenvalues, dtype=np.float64).ravel()
    n = lam.size
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    if n and lam.min() < 0:
        raise ValueError("eigenvalues must be nonnegative")

    scale = 1.0
    lam_max = lam.max() if n else 0.0
    if k > 0 and lam_max > 0:
        # Bound e_k <= C(n,k) * lam_max^k; rescale only if it could overflow.
        log_bound = (
            math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            + k * math.log(lam_max)
        )
        if log_bound > math.log(_OVERFLOW_LIMIT):
            scale = lam_max
            lam = lam / scale

    e = np.zeros((n + 1, k + 1))
    e[:, 0] = 1.0
    for m in range(1, n + 1):
        e[m, 1:] = e[m - 1, 1:] + lam[m - 1] * e[m - 1, :-1]
    return ElementarySymmetricTable(e, scale)


def _select_eigenvectors(eig: EigenSystem, k: int, table: ElementarySymmetricTable,
                         u: list) -> list:
    """Phase one: choose k eigenvector indices using uniforms u[0..n-1]."""
    e = table._rows()
    lam = eig.eigenvalues if table.scale == 1.0 else eig.eigenvalues / table.scale
    lam = lam.tolist()
    n = eig.n
    chosen = []
    kk = k
    for m in range(n, 0, -1):
        if kk == 0:
            break
        if u[n - m] < lam[m - 1] * e[m - 1][kk - 1] / e[m][kk]:
            chosen.append(m - 1)
            kk -= 1
    if kk != 0:
        raise NumericError("eigenvalue selection failed to pick k components")
    return chosen


def _drop_coordinate(act: np.ndarray, i: int) -> None:
    """Rotate the orthonormal rows of act so rows 1.. span the part of
    their span orthogonal to coordinate i.

    The rows stay orthonormal because the update is a single Householder
    reflection applied in coefficient space: the reflection maps the
    vector of i-th coordinates onto the first basis vector, so every row
    but the first ends up with a zero i-th coordinate while the span is
    preserved exactly.
    """
    c = act[:, i].copy()
    alpha = math.sqrt(c @ c)
    if alpha == 0.0:
        raise NumericError("orthogonal complement collapsed during sampling")
    c[0] += math.copysign(alpha, c[0])
    beta = 2.0 / (c @ c)
    act -= (beta * c)[:, None] * (c @ act)[None, :]
    act[1:, i] = 0.0


def sample_k_dpp(eig: EigenSystem, k: int, rng: np.random.Generator,
                 table: ElementarySymmetricTable | None = None,
                 stream_id=None) -> DppSample:
    """Draw one size-k subset from the fixed-cardinality DPP given by eig.

    `table` may carry a precomputed elementary-symmetric table for this
    (eigenvalues, k) pair; searches reuse one table across iterations.
    Requires at least k strictly positive eigenvalues.
    """
    n = eig.n
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, {n}], got {k}")
    if int(np.count_nonzero(eig.eigenvalues > 0)) < k:
        raise RankDeficientError(
            f"rank deficient: fewer than {k} positive eigenvalues"
        )
    if table is None:
        table = elementary_table(eig.eigenvalues, k)
    elif table.n != n or table.k < k:
        raise ValueError("elementary table does not match this eigensystem")

    if k == 0:
        return DppSample((), stream_id)

    chosen = _select_eigenvectors(eig, k, table, rng.random(n).tolist())

    # Phase two on the transposed basis: rows of vt span the projection.
    # Each round selects an item and rotates the basis so the leading row
    # can be discarded, leaving an orthonormal basis of the complement.
    vt = np.ascontiguousarray(eig.eigenvectors[:, chosen].T)
    items = []
    for step in range(k):
        act = vt[step:]
        p = np.cumsum((act * act).sum(axis=0))
        i = int(np.searchsorted(p, rng.random() * p[-1], side="right"))
        i = min(i, n - 1)
        items.append(i)
        if step < k - 1:
            _drop_coordinate(act, i)

    if len(items) != k or len(set(items)) != k:
        raise NumericError("projection sampling did not return k distinct items")
    return DppSample(tuple(sorted(items)), stream_id)


def _combination_chunks(n: int, k: int, chunk: int):
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def batch_log_dets(entries: np.ndarray, combos: np.ndarray) -> np.ndarray:
    """Log-determinants of the principal submatrices indexed by each row.

    Non-positive determinants map to -inf.
    """
    sub = entries[combos[:, :, None], combos[:, None, :]]
    sign, logdet = np.linalg.slogdet(sub)
    logdet[sign <= 0] = -np.inf
    return logdet


def exact_k_dpp_pmf(K: KernelMatrix, k: int) -> dict:
    """Exact subset probabilities det(K[Y]) / sum over |Y'| = k of det(K[Y']).

    Full enumeration; guarded at C(n, k) <= 1e6 subsets.
    """
    n = K.dim
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    total = math.comb(n, k)
    if total > _PMF_BUDGET:
        raise CombinatorialBudgetError(
            f"budget exceeded: C({n},{k}) = {total} > {_PMF_BUDGET}"
        )
    subsets = []
    logdets = []
    for combos in _combination_chunks(n, k, 100_000):
        subsets.extend(map(tuple, combos.tolist()))
        logdets.append(batch_log_dets(K.entries, combos))
    ld = np.concatenate(logdets)
    top = ld.max()
    if not np.isfinite(top):
        raise NumericError("all principal minors are singular")
    w = np.exp(ld - top)
    w /= w.sum()
    return dict(zip(subsets, w.tolist()))
