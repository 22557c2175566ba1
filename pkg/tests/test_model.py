import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superkmeans.model import (
    BufferLedger,
    DimensionMismatch,
    EtrConfig,
    KMeansConfig,
    NonFiniteValue,
    initial_d_prime,
    pdxify,
    pruning_supported,
    tail_block_layout,
    validate_vector_set,
)


class TestValidateVectorSet:
    def test_identity_for_finite_matrix(self):
        x = np.arange(6, dtype=np.float32).reshape(2, 3)
        out = validate_vector_set(x)
        assert out.shape == (2, 3)
        assert np.array_equal(out, x)

    def test_nan_reports_position(self):
        x = np.zeros((3, 2), dtype=np.float32)
        x[1, 0] = np.nan
        with pytest.raises(NonFiniteValue) as exc:
            validate_vector_set(x)
        assert exc.value.row == 1 and exc.value.col == 0

    def test_inf_rejected(self):
        x = np.zeros((2, 2), dtype=np.float32)
        x[0, 1] = np.inf
        with pytest.raises(NonFiniteValue):
            validate_vector_set(x)

    def test_declared_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            validate_vector_set(np.zeros(5, dtype=np.float32), n_rows=2, dim=3)

    def test_flat_with_declared_shape(self):
        out = validate_vector_set(np.arange(6, dtype=np.float32), n_rows=2, dim=3)
        assert out.shape == (2, 3)

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionMismatch):
            validate_vector_set(np.zeros((2, 2, 2), dtype=np.float32))


class TestPdxBank:
    def test_round_trip_exact_blocks(self):
        rng = np.random.default_rng(0)
        c = rng.standard_normal((10, 192)).astype(np.float32)
        bank = pdxify(c, 64)  # tail of 128 = two full blocks
        assert bank.n_blocks == 2
        assert np.array_equal(bank.reconstruct(), c)

    def test_round_trip_ragged_block(self):
        rng = np.random.default_rng(1)
        c = rng.standard_normal((7, 200)).astype(np.float32)
        bank = pdxify(c, 25)  # tail 175 = 64 + 64 + 47
        assert list(bank.block_dims) == [64, 64, 47]
        assert np.array_equal(bank.reconstruct(), c)

    def test_block_is_dimension_major(self):
        rng = np.random.default_rng(2)
        c = rng.standard_normal((5, 96)).astype(np.float32)
        bank = pdxify(c, 16)
        blk = bank.block(0)
        assert blk.shape == (64, 5)
        # entry [t, j] must be centroid j's dimension 16 + t
        assert blk[3, 2] == c[2, 19]

    def test_bank_size_cap(self):
        c = np.zeros((1025, 80), dtype=np.float32)
        with pytest.raises(DimensionMismatch):
            pdxify(c, 16)

    @settings(max_examples=40, deadline=None)
    @given(
        k_batch=st.integers(1, 64),
        dim=st.sampled_from([64, 100, 128, 200, 1024]),
        data=st.data(),
    )
    def test_round_trip_property(self, k_batch, dim, data):
        d_prime = data.draw(st.integers(1, dim - 1))
        rng = np.random.default_rng(k_batch * 10007 + dim)
        c = rng.standard_normal((k_batch, dim)).astype(np.float32)
        bank = pdxify(c, d_prime)
        assert int(bank.block_dims.sum()) == dim - d_prime
        assert np.array_equal(bank.reconstruct(), c)

    def test_layout_bounds(self):
        dims, bounds = tail_block_layout(200, 25)
        assert list(dims) == [64, 64, 47]
        assert list(bounds) == [89, 153, 200]


class TestConfig:
    def test_d_prime_derivation(self):
        assert initial_d_prime(1536, 0.125) == 192
        assert initial_d_prime(768, 0.125) == 96

    def test_d_prime_clamps(self):
        assert initial_d_prime(100, 0.125) == 16   # floor clamp
        assert initial_d_prime(4096, 0.99) == 4032  # upper clamp d - 64

    def test_pruning_supported_boundary(self):
        assert pruning_supported(80)
        assert not pruning_supported(79)

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            KMeansConfig(k=0)
        with pytest.raises(ValueError):
            KMeansConfig(k=2, d_prime_init_fraction=1.0)
        with pytest.raises(ValueError):
            KMeansConfig(k=2, prune_target_low=0.97, prune_target_high=0.95)
        with pytest.raises(ValueError):
            KMeansConfig(k=2, sampling_fraction=0.0)
        with pytest.raises(ValueError):
            KMeansConfig(k=2, gemm_backend="magic")
        with pytest.raises(ValueError):
            EtrConfig(nprobe_fraction=0.0)

    def test_defaults_match_contract(self):
        cfg = KMeansConfig(k=10)
        assert cfg.max_iters == 25
        assert cfg.x_batch == 4096
        assert cfg.y_batch == 1024
        assert cfg.d_prime_init_fraction == 0.125
        assert cfg.delta_d == 64
        assert cfg.epsilon0 == 2.1
        assert (cfg.prune_target_low, cfg.prune_target_high) == (0.95, 0.97)
        etr = EtrConfig()
        assert etr.tolerance == 0.005
        assert etr.patience_iters == 2
        assert etr.n_queries == 1000
        assert etr.top_k == 100
        assert etr.nprobe_fraction == 0.01


class TestBufferLedger:
    def test_peak_tracks_live_sum(self):
        led = BufferLedger()
        led.register("a", np.zeros(100, dtype=np.float32))
        led.register("b", np.zeros(50, dtype=np.int32))
        assert led.peak_values == 150
        led.release("a")
        led.register("c", np.zeros(60, dtype=np.float64))  # 120 values
        assert led.peak_values == 170

    def test_reregister_replaces(self):
        led = BufferLedger()
        led.register("a", np.zeros(100, dtype=np.float32))
        led.register("a", np.zeros(10, dtype=np.float32))
        led.register("b", np.zeros(5, dtype=np.float32))
        assert led.peak_values == 100
