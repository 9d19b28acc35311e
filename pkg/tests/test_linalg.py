"""Matrix substrate: exact accumulation contract, rng reproducibility."""

import numpy as np
import pytest

from fusebench.linalg import Rng, ShapeError, elementwise, matmul, reduce_sum, transpose

from _oracles import matmul_triple_loop


class TestMatmul:
    def test_identity_times_matrix(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        assert np.array_equal(matmul(np.eye(2, dtype=np.float32), a), a)

    def test_row_times_column(self):
        out = matmul(np.array([[1.0, 2.0]], np.float32), np.array([[3.0], [4.0]], np.float32))
        assert out.shape == (1, 1)
        assert out[0, 0] == 11.0

    def test_matches_triple_loop_oracle_exactly(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((5, 4)).astype(np.float32)
        b = rng.standard_normal((4, 3)).astype(np.float32)
        expected = matmul_triple_loop(a, b).astype(np.float32)
        assert np.array_equal(matmul(a, b), expected)

    def test_identity_absorption_up_to_64(self):
        rng = np.random.default_rng(5)
        for n in (1, 2, 7, 33, 64):
            a = rng.standard_normal((n, n)).astype(np.float32)
            eye = np.eye(n, dtype=np.float32)
            assert np.array_equal(matmul(a, eye), a)
            assert np.array_equal(matmul(eye, a), a)

    def test_transpose_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            m, k, n = rng.integers(1, 17, size=3)
            a = rng.standard_normal((m, k)).astype(np.float32)
            b = rng.standard_normal((k, n)).astype(np.float32)
            lhs = transpose(matmul(a, b))
            rhs = matmul(transpose(b), transpose(a))
            assert np.array_equal(lhs, rhs)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.zeros((2, 3), np.float32), np.zeros((2, 3), np.float32))

    def test_float64_operands_stay_float64(self):
        a = np.ones((2, 2))
        out = matmul(a, a)
        assert out.dtype == np.float64
        assert np.array_equal(out, 2 * np.ones((2, 2)))

    def test_result_independent_of_thread_cap(self, monkeypatch):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((103, 257)).astype(np.float32)
        b = rng.standard_normal((257, 61)).astype(np.float32)
        results = []
        for cap in ("1", "2", "4", "16"):
            monkeypatch.setenv("FUSEBENCH_THREADS", cap)
            results.append(matmul(a, b))
        for got in results[1:]:
            assert np.array_equal(results[0], got)

    def test_bad_thread_cap_rejected(self, monkeypatch):
        monkeypatch.setenv("FUSEBENCH_THREADS", "zero")
        with pytest.raises(ValueError, match="FUSEBENCH_THREADS"):
            matmul(np.ones((2, 2), np.float32), np.ones((2, 2), np.float32))
        monkeypatch.setenv("FUSEBENCH_THREADS", "0")
        with pytest.raises(ValueError, match=">= 1"):
            matmul(np.ones((2, 2), np.float32), np.ones((2, 2), np.float32))


class TestElementwise:
    def test_add(self):
        out = elementwise(np.array([[1.0, -1.0]], np.float32),
                          np.array([[0.5, 0.5]], np.float32), "add")
        assert np.array_equal(out, np.array([[1.5, -0.5]], np.float32))

    def test_hadamard_with_ones_is_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((3, 5)).astype(np.float32)
        assert np.array_equal(elementwise(a, np.ones_like(a), "hadamard"), a)

    def test_hadamard_values(self):
        out = elementwise(np.array([[2.0, 3.0]], np.float32),
                          np.array([[4.0, 5.0]], np.float32), "hadamard")
        assert np.array_equal(out, np.array([[8.0, 15.0]], np.float32))

    def test_sub(self):
        out = elementwise(np.array([[1.0, 2.0]], np.float32),
                          np.array([[0.5, 3.0]], np.float32), "sub")
        assert np.array_equal(out, np.array([[0.5, -1.0]], np.float32))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise(np.zeros((2, 2), np.float32), np.zeros((2, 3), np.float32), "add")

    def test_unknown_op(self):
        with pytest.raises(ValueError, match="unknown elementwise op"):
            elementwise(np.zeros((1, 1), np.float32), np.zeros((1, 1), np.float32), "div")


class TestHelpers:
    def test_transpose_is_contiguous_copy(self):
        a = np.arange(6, dtype=np.float32).reshape(2, 3)
        t = transpose(a)
        assert t.shape == (3, 2)
        assert t.flags["C_CONTIGUOUS"]
        assert np.array_equal(t, a.T)

    def test_reduce_sum_axis_and_total(self):
        a = np.arange(6, dtype=np.float32).reshape(2, 3)
        assert reduce_sum(a) == 15.0
        assert np.array_equal(reduce_sum(a, axis=0), np.array([3.0, 5.0, 7.0], np.float32))
        assert reduce_sum(a, axis=0).dtype == np.float32


class TestRng:
    def test_std_zero_fills_mean(self):
        out = Rng(1).normal(2, 2, mean=3.0, std=0.0)
        assert np.array_equal(out, np.full((2, 2), 3.0, np.float32))

    def test_same_seed_same_matrix(self):
        a = Rng(99).normal(8, 8)
        b = Rng(99).normal(8, 8)
        assert np.array_equal(a, b)

    def test_million_values_bitwise_equal(self):
        a = Rng(2024).normal(1000, 1000)
        b = Rng(2024).normal(1000, 1000)
        assert a.tobytes() == b.tobytes()

    def test_moments_of_standard_normal(self):
        draws = Rng(31).normal(100, 100)
        assert abs(float(draws.mean())) < 0.05
        assert abs(float(draws.std()) - 1.0) < 0.05

    def test_negative_std_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            Rng(0).normal(1, 1, std=-1.0)

    def test_spawned_children_are_deterministic_and_distinct(self):
        kids_a = Rng(7).spawn(3)
        kids_b = Rng(7).spawn(3)
        mats_a = [k.normal(4, 4) for k in kids_a]
        mats_b = [k.normal(4, 4) for k in kids_b]
        for a, b in zip(mats_a, mats_b):
            assert np.array_equal(a, b)
        assert not np.array_equal(mats_a[0], mats_a[1])

    def test_permutation_determinism(self):
        assert np.array_equal(Rng(5).permutation(50), Rng(5).permutation(50))
