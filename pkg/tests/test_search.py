import itertools
import math

import numpy as np
import pytest

from dppdesign import (
    CombinatorialBudgetError,
    GaConfig,
    KernelMatrix,
    best_subset,
    design_subset,
    dpp_search,
    exchange_refine,
    exhaustive_search,
    genetic_search,
    greedy_backward,
    greedy_forward,
    log_det_submatrix,
    synth_kernel,
)
from dppdesign.trace import SampleTrace, read_trace, write_trace
from conftest import random_pd_kernel


def brute_force_greedy(K, k):
    """Independent re-implementation: grow the set, best increment first."""
    chosen = []
    for _ in range(k):
        best_val, best_s = -np.inf, None
        for s in range(K.dim):
            if s in chosen:
                continue
            val = log_det_submatrix(K, sorted(chosen + [s]))
            if val > best_val:
                best_val, best_s = val, s
        chosen.append(best_s)
    return tuple(sorted(chosen))


class TestGreedy:
    def test_forward_diagonal(self):
        K = KernelMatrix(np.diag([5.0, 3.0, 1.0]))
        res = greedy_forward(K, 2)
        assert res.indices == (0, 1)
        assert res.log_det == pytest.approx(math.log(15), abs=1e-12)

    def test_forward_identity_tie_break(self):
        res = greedy_forward(KernelMatrix(np.eye(5)), 3)
        assert res.indices == (0, 1, 2)
        assert res.log_det == 0.0

    @pytest.mark.parametrize("seed", [0, 7, 23])
    def test_forward_matches_brute_force(self, seed):
        K = random_pd_kernel(10, seed=seed)
        assert greedy_forward(K, 3).indices == brute_force_greedy(K, 3)

    def test_backward_diagonal(self):
        K = KernelMatrix(np.diag([5.0, 3.0, 1.0]))
        # removing index 2 maximizes the remaining determinant at each step
        assert greedy_backward(K, 2).indices == (0, 1)

    def test_backward_k_equals_n(self, pd6):
        assert greedy_backward(pd6, 6).indices == (0, 1, 2, 3, 4, 5)

    def test_backward_identity_tie_break(self):
        assert greedy_backward(KernelMatrix(np.eye(4)), 2).indices == (0, 1)

    def test_greedy_never_beats_exhaustive(self):
        for seed in (1, 4, 9):
            K = random_pd_kernel(9, seed=seed)
            g = greedy_forward(K, 4).log_det
            e = exhaustive_search(K, 4).log_det
            assert g <= e + 1e-12


class TestExchange:
    def test_already_optimal_unchanged(self):
        K = KernelMatrix(np.diag([5.0, 3.0, 1.0]))
        start = greedy_forward(K, 2)
        assert exchange_refine(K, start).indices == (0, 1)

    def test_improves_bad_start(self):
        K = KernelMatrix(np.diag([5.0, 3.0, 1.0]))
        start = design_subset(K, [1, 2])
        refined = exchange_refine(K, start)
        # enumerating all one-swaps: replacing 2 with 0 is the improvement
        assert refined.indices == (0, 1)

    def test_full_set_unchanged(self, pd6):
        start = design_subset(pd6, range(6))
        assert exchange_refine(pd6, start).indices == start.indices

    def test_never_decreases_and_locally_optimal(self):
        K = random_pd_kernel(8, seed=3)
        start = design_subset(K, [5, 6, 7])
        refined = exchange_refine(K, start)
        assert refined.log_det >= start.log_det
        inside = set(refined.indices)
        for l in refined.indices:
            for s in range(8):
                if s in inside:
                    continue
                swapped = sorted(set(refined.indices) - {l} | {s})
                assert log_det_submatrix(K, swapped) <= refined.log_det + 1e-12


class TestExhaustive:
    def test_diagonal(self):
        K = KernelMatrix(np.diag([5.0, 3.0, 1.0]))
        res = exhaustive_search(K, 2)
        assert res.indices == (0, 1)
        assert res.log_det == pytest.approx(math.log(15), abs=1e-12)

    def test_identity_lexicographic(self):
        assert exhaustive_search(KernelMatrix(np.eye(6)), 3).indices == (0, 1, 2)

    def test_tridiagonal_minors(self):
        K = KernelMatrix([[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]])
        # minors: {0,1}: 3, {0,2}: 4, {1,2}: 3
        res = exhaustive_search(K, 2)
        assert res.indices == (0, 2)
        assert res.log_det == pytest.approx(math.log(4), abs=1e-12)

    def test_matches_full_enumeration(self, pd6):
        res = exhaustive_search(pd6, 3)
        vals = {
            s: log_det_submatrix(pd6, s)
            for s in itertools.combinations(range(6), 3)
        }
        assert res.indices == max(sorted(vals), key=lambda s: vals[s])

    def test_budget_guard(self):
        K = KernelMatrix(np.eye(40))
        with pytest.raises(CombinatorialBudgetError):
            exhaustive_search(K, 20)


class TestGeneticSearch:
    def test_finds_top_diagonal(self):
        K = KernelMatrix(np.diag(np.arange(1.0, 11.0)))
        trace = genetic_search(K, 3, GaConfig(generations=50), seed=1)
        assert trace.best()[1] == pytest.approx(math.log(10 * 9 * 8), abs=1e-10)

    def test_no_variation_keeps_population(self):
        K = random_pd_kernel(8, seed=2)
        cfg = GaConfig(population=10, p_mutprop=0.0, p_mut=0.0, generations=15)
        same = [(0, 2, 5)] * 10
        trace = genetic_search(K, 3, cfg, seed=0, initial_population=same)
        assert np.all(trace.values == trace.values[0])
        assert all(s == (0, 2, 5) for s in trace.subsets)

    def test_elitism_makes_best_non_decreasing(self):
        K = random_pd_kernel(12, seed=5)
        trace = genetic_search(K, 4, GaConfig(generations=30), seed=3)
        assert np.all(np.diff(trace.values) >= 0)

    def test_deterministic(self):
        K = random_pd_kernel(9, seed=6)
        cfg = GaConfig(population=20, generations=10)
        a = genetic_search(K, 3, cfg, seed=11)
        b = genetic_search(K, 3, cfg, seed=11)
        assert np.array_equal(a.values, b.values)
        assert a.subsets == b.subsets

    def test_reference_default_tuning(self):
        cfg = GaConfig()
        assert cfg.population == 100
        assert cfg.p_cross == 0.75
        assert cfg.p_mut == 0.05
        assert cfg.tournament_size == 4

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GaConfig(population=1)
        with pytest.raises(ValueError):
            GaConfig(p_cross=1.5)
        with pytest.raises(ValueError):
            GaConfig(population=3, tournament_size=4)


class TestDppSearch:
    def test_single_iteration(self, pd6):
        trace = dpp_search(pd6, 2, 1, seed=0)
        assert trace.n == 1
        assert trace.iterations[0] == 1
        assert trace.best()[2] == trace.subsets[0]

    def test_identity_kernel_all_zero(self):
        trace = dpp_search(KernelMatrix(np.eye(8)), 3, 50, seed=1)
        assert np.all(trace.values == 0.0)

    def test_best_so_far_is_running_max(self, pd6):
        trace = dpp_search(pd6, 3, 300, seed=2)
        assert np.array_equal(trace.best_so_far, np.maximum.accumulate(trace.values))
        assert np.all(np.diff(trace.best_so_far) >= 0)

    def test_reaches_exhaustive_optimum_small(self):
        K = synth_kernel(10, 0.5, 1e-6, seed=7)
        opt = exhaustive_search(K, 3)
        trace = dpp_search(K, 3, 5000, seed=0)
        assert best_subset(K, trace).indices == opt.indices

    def test_bit_reproducible(self, pd6):
        a = dpp_search(pd6, 2, 400, seed=9)
        b = dpp_search(pd6, 2, 400, seed=9)
        assert np.array_equal(a.values, b.values)
        assert a.subsets == b.subsets

    def test_worker_count_invariance(self):
        K = synth_kernel(9, 0.5, 1e-6, seed=2)
        seq = dpp_search(K, 3, 600, seed=4, workers=1)
        par = dpp_search(K, 3, 600, seed=4, workers=2)
        assert np.array_equal(seq.values, par.values)
        assert seq.subsets == par.subsets

    def test_validation(self, pd6):
        with pytest.raises(ValueError):
            dpp_search(pd6, 2, 0, seed=0)
        with pytest.raises(ValueError):
            dpp_search(pd6, 2, 10, seed=0, workers=0)


class TestTraceRoundTrip:
    def test_lossless_csv(self, tmp_path, pd6):
        trace = dpp_search(pd6, 2, 50, seed=3)
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        back = read_trace(path)
        assert np.array_equal(back.values, trace.values)
        assert np.array_equal(back.iterations, trace.iterations)
        assert back.subsets == trace.subsets

    def test_record_flags_column(self, tmp_path):
        trace = SampleTrace([1, 2, 3, 4], [1.0, 3.0, 2.0, 5.0], [(0,)] * 4)
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        flags = [row.split(",")[2] for row in path.read_text().splitlines()[1:]]
        assert flags == ["1", "1", "0", "1"]

    def test_invalid_construction(self):
        with pytest.raises(ValueError):
            SampleTrace([], [], [])
        with pytest.raises(ValueError):
            SampleTrace([2, 3], [0.0, 1.0], [(0,), (1,)])
        with pytest.raises(ValueError):
            SampleTrace([1, 1], [0.0, 1.0], [(0,), (1,)])

    def test_read_rejects_garbage(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("nope\n")
        from dppdesign import InputFormatError

        with pytest.raises(InputFormatError):
            read_trace(p)
