import numpy as np
import pytest

from superkmeans.distance import (
    expand_to_sq_l2,
    matmul,
    sq_l2_block,
    tail_block_sq_l2,
)
from superkmeans.model import NormCache, pdxify
from superkmeans.preprocess import compute_norms

GEMM_BACKENDS = ["blas", "portable"]


def _direct_sq_dists(a, b):
    return np.sum(
        (a.astype(np.float64)[:, None, :] - b.astype(np.float64)[None, :, :]) ** 2,
        axis=2,
    )


class TestMatmul:
    @pytest.mark.parametrize("backend", GEMM_BACKENDS)
    def test_one_hot_selects_column(self, backend):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((5, 8)).astype(np.float32)
        e0 = np.zeros((1, 8), dtype=np.float32)
        e0[0, 0] = 1.0
        out = matmul(a, e0, 8, backend=backend)
        assert np.allclose(out[:, 0], a[:, 0], atol=1e-6)

    @pytest.mark.parametrize("backend", GEMM_BACKENDS)
    def test_gram_symmetry(self, backend):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((16, 32)).astype(np.float32)
        g = matmul(a, a, 32, backend=backend)
        assert np.max(np.abs(g - g.T)) <= 1e-5 * max(1.0, np.abs(g).max())

    @pytest.mark.parametrize("backend", GEMM_BACKENDS)
    def test_triple_loop_oracle(self, backend):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((64, 128)).astype(np.float32)
        b = rng.standard_normal((32, 128)).astype(np.float32)
        out = matmul(a, b, 128, backend=backend)
        oracle = np.zeros((64, 32))
        for i in range(64):
            for l in range(32):
                oracle[i, l] = float(np.dot(a[i].astype(np.float64), b[l].astype(np.float64)))
        scale = max(1.0, np.abs(oracle).max())
        assert np.max(np.abs(out - oracle)) <= 1e-4 * scale

    @pytest.mark.parametrize("backend", GEMM_BACKENDS)
    def test_partial_dims(self, backend):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((10, 64)).astype(np.float32)
        b = rng.standard_normal((6, 64)).astype(np.float32)
        out = matmul(a, b, 16, backend=backend)
        oracle = a[:, :16].astype(np.float64) @ b[:, :16].astype(np.float64).T
        assert np.allclose(out, oracle, atol=1e-4 * max(1.0, np.abs(oracle).max()))

    def test_portable_thread_invariance(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((33, 100)).astype(np.float32)
        b = rng.standard_normal((17, 100)).astype(np.float32)
        outs = [matmul(a, b, 100, backend="portable", threads=t) for t in (1, 2, 4)]
        assert np.array_equal(outs[0], outs[1])
        assert np.array_equal(outs[0], outs[2])


class TestExpansion:
    def test_identical_vectors_zero(self):
        x = np.random.default_rng(0).standard_normal((4, 16)).astype(np.float32)
        xn = compute_norms(x, 16)
        inner = matmul(x, x, 16)
        block = expand_to_sq_l2(inner, xn, xn)
        assert np.all(np.diag(block.values) <= 1e-3)
        assert np.all(block.values >= 0.0)

    def test_hand_computed(self):
        x = np.array([[1.0, 0.0]], dtype=np.float32)
        y = np.array([[0.0, 1.0]], dtype=np.float32)
        block = expand_to_sq_l2(matmul(x, y, 2), compute_norms(x, 2), compute_norms(y, 2))
        assert block.values[0, 0] == pytest.approx(2.0)

    def test_scalar_subtraction_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((64, 96)).astype(np.float32) + 2.0
        y = rng.standard_normal((32, 96)).astype(np.float32)
        block = expand_to_sq_l2(matmul(x, y, 96), compute_norms(x, 96), compute_norms(y, 96))
        oracle = _direct_sq_dists(x, y)
        rel = np.abs(block.values - oracle) / np.maximum(oracle, 1e-9)
        assert rel.max() <= 1e-3

    def test_partial_uses_partial_norms(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((10, 64)).astype(np.float32)
        y = rng.standard_normal((5, 64)).astype(np.float32)
        xn, yn = compute_norms(x, 16), compute_norms(y, 16)
        block = expand_to_sq_l2(matmul(x, y, 16), xn, yn, partial=True)
        oracle = _direct_sq_dists(x[:, :16], y[:, :16])
        assert np.allclose(block.values, oracle, rtol=1e-3, atol=1e-4)
        assert block.d_covered == 16


class TestTailBlocks:
    def _setup(self, seed=7, k=12, d=200, d_prime=25):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal((k, d)).astype(np.float32)
        x = rng.standard_normal(d).astype(np.float32)
        return x, c, pdxify(c, d_prime)

    def test_identical_slab_zero(self):
        x, c, bank = self._setup()
        x[25:89] = c[3, 25:89]
        assert tail_block_sq_l2(x[25:89], bank, 3, 0) == 0.0

    def test_all_ones_difference(self):
        x, c, bank = self._setup()
        x[25:89] = c[5, 25:89] + 1.0
        assert tail_block_sq_l2(x[25:89], bank, 5, 0) == pytest.approx(64.0)

    def test_row_major_oracle(self):
        x, c, bank = self._setup()
        pos = 25
        for b, bd in enumerate(bank.block_dims):
            bd = int(bd)
            for j in (0, 4, 11):
                got = tail_block_sq_l2(x[pos : pos + bd], bank, j, b)
                want = float(np.sum((x[pos : pos + bd].astype(np.float64) - c[j, pos : pos + bd]) ** 2))
                assert got == pytest.approx(want, rel=1e-5)
            pos += bd

    def test_partial_additivity(self):
        # distance at d_prime plus tail-block increments == full distance
        rng = np.random.default_rng(8)
        d, d_prime = 300, 40
        x = rng.standard_normal((20, d)).astype(np.float32)
        y = rng.standard_normal((15, d)).astype(np.float32)
        bank = pdxify(y, d_prime)
        part = expand_to_sq_l2(
            matmul(x, y, d_prime), compute_norms(x, d_prime), compute_norms(y, d_prime),
            partial=True,
        ).values
        full_oracle = _direct_sq_dists(x, y)
        for i in range(0, 20, 3):
            for j in range(0, 15, 4):
                total = float(part[i, j])
                pos = d_prime
                for b, bd in enumerate(bank.block_dims):
                    total += tail_block_sq_l2(x[i, pos : pos + int(bd)], bank, j, b)
                    pos += int(bd)
                assert total == pytest.approx(full_oracle[i, j], rel=1e-3)


class TestSqL2Block:
    def test_full_and_partial_paths(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((8, 48)).astype(np.float32)
        y = rng.standard_normal((4, 48)).astype(np.float32)
        full = sq_l2_block(x, y, compute_norms(x, 12), compute_norms(y, 12))
        assert full.d_covered == 48
        oracle = _direct_sq_dists(x, y)
        assert np.allclose(full.values, oracle, rtol=1e-3, atol=1e-3)
