import struct

import numpy as np
import pytest

from superkmeans import GroundTruth, brute_force_topk
from superkmeans.dataio import (
    CentroidModel,
    RunReport,
    infer_format,
    load_centroids,
    load_ground_truth,
    load_vectors,
    save_centroids,
    save_ground_truth,
    sha256_file,
    write_fbin,
    write_fvecs,
)
from superkmeans.model import (
    ChecksumMismatch,
    InconsistentDim,
    MalformedHeader,
    NonFiniteValue,
    TruncatedFile,
    VersionMismatch,
)


@pytest.fixture
def vectors():
    rng = np.random.default_rng(0)
    return rng.standard_normal((17, 4)).astype(np.float32)


class TestFvecs:
    def test_round_trip(self, vectors, tmp_path):
        path = tmp_path / "v.fvecs"
        write_fvecs(path, vectors)
        out = load_vectors(path)
        assert np.array_equal(out, vectors)
        write_fvecs(tmp_path / "v2.fvecs", out)
        assert (tmp_path / "v.fvecs").read_bytes() == (tmp_path / "v2.fvecs").read_bytes()

    def test_two_record_example(self, tmp_path):
        path = tmp_path / "two.fvecs"
        with open(path, "wb") as f:
            for row in ([1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]):
                f.write(struct.pack("<i", 4))
                f.write(struct.pack("<4f", *row))
        out = load_vectors(path)
        assert out.shape == (2, 4)
        assert out[1, 3] == 8.0

    def test_inconsistent_dim(self, tmp_path):
        path = tmp_path / "bad.fvecs"
        with open(path, "wb") as f:
            f.write(struct.pack("<i", 4))
            f.write(struct.pack("<4f", 1, 2, 3, 4))
            f.write(struct.pack("<i", 5))
            f.write(struct.pack("<5f", 1, 2, 3, 4, 5))
        with pytest.raises(InconsistentDim) as exc:
            load_vectors(path)
        assert exc.value.row == 1

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "trunc.fvecs"
        with open(path, "wb") as f:
            f.write(struct.pack("<i", 4))
            f.write(struct.pack("<4f", 1, 2, 3, 4))
            f.write(struct.pack("<i", 4))
            f.write(struct.pack("<2f", 1, 2))  # half a record
        with pytest.raises(TruncatedFile):
            load_vectors(path)

    def test_nonfinite_rejected(self, tmp_path):
        path = tmp_path / "nan.fvecs"
        bad = np.zeros((2, 3), dtype=np.float32)
        bad[1, 2] = np.nan
        write_fvecs(path, bad)
        with pytest.raises(NonFiniteValue):
            load_vectors(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.fvecs"
        path.write_bytes(b"")
        with pytest.raises(MalformedHeader):
            load_vectors(path)


class TestFbin:
    def test_round_trip(self, vectors, tmp_path):
        path = tmp_path / "v.fbin"
        write_fbin(path, vectors)
        out = load_vectors(path)
        assert np.array_equal(out, vectors)
        write_fbin(tmp_path / "v2.fbin", out)
        assert (tmp_path / "v.fbin").read_bytes() == (tmp_path / "v2.fbin").read_bytes()

    def test_truncated(self, tmp_path):
        path = tmp_path / "short.fbin"
        with open(path, "wb") as f:
            f.write(struct.pack("<ii", 3, 2))
            f.write(struct.pack("<5f", 1, 2, 3, 4, 5))  # promises 6 floats
        with pytest.raises(TruncatedFile):
            load_vectors(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.fbin"
        path.write_bytes(struct.pack("<ii", -1, 4))
        with pytest.raises(MalformedHeader):
            load_vectors(path)

    def test_normalize_option(self, vectors, tmp_path):
        path = tmp_path / "v.fbin"
        write_fbin(path, vectors)
        out = load_vectors(path, normalize=True)
        norms = np.linalg.norm(out, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-5)

    def test_format_inference(self):
        assert infer_format("x.fvecs") == "fvecs"
        assert infer_format("x.fbin") == "fbin"
        assert infer_format("x.bin") == "fbin"
        with pytest.raises(MalformedHeader):
            infer_format("x.csv")


class TestCentroidModel:
    def test_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(1)
        cents = rng.standard_normal((12, 32)).astype(np.float32)
        lists = [np.sort(rng.choice(100, rng.integers(0, 10), replace=False)).astype(np.int64)
                 for _ in range(12)]
        path = tmp_path / "model.skmc"
        save_centroids(path, cents, rotation_seed=42, cluster_lists=lists)
        model = load_centroids(path)
        assert np.array_equal(model.centroids, cents)
        assert model.rotation_seed == 42
        assert len(model.cluster_lists) == 12
        for a, b in zip(model.cluster_lists, lists):
            assert np.array_equal(a, b)

    def test_no_lists(self, tmp_path):
        cents = np.ones((3, 4), dtype=np.float32)
        path = tmp_path / "m.skmc"
        save_centroids(path, cents, rotation_seed=7)
        model = load_centroids(path)
        assert model.cluster_lists is None
        assert model.k == 3 and model.dim == 4

    def test_corrupted_byte(self, tmp_path):
        cents = np.ones((3, 4), dtype=np.float32)
        path = tmp_path / "m.skmc"
        save_centroids(path, cents, rotation_seed=7)
        raw = bytearray(path.read_bytes())
        raw[30] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ChecksumMismatch):
            load_centroids(path)

    def test_version_bump(self, tmp_path):
        cents = np.ones((2, 2), dtype=np.float32)
        path = tmp_path / "m.skmc"
        save_centroids(path, cents, rotation_seed=1)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatch) as exc:
            load_centroids(path)
        assert "99" in str(exc.value)

    def test_not_a_model(self, tmp_path):
        path = tmp_path / "junk.skmc"
        path.write_bytes(b"definitely not a model")
        with pytest.raises(MalformedHeader):
            load_centroids(path)


class TestGroundTruthFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((50, 8)).astype(np.float32)
        gt = brute_force_topk(x, x[:5], 10)
        path = tmp_path / "gt.skgt"
        save_ground_truth(path, gt)
        back = load_ground_truth(path)
        assert np.array_equal(back.indices, gt.indices)
        assert np.array_equal(back.distances, gt.distances)
        assert back.k_gt == 10

    def test_truncated(self, tmp_path):
        path = tmp_path / "gt.skgt"
        path.write_bytes(b"SKGT" + struct.pack("<II", 10, 10) + b"\x00" * 8)
        with pytest.raises(TruncatedFile):
            load_ground_truth(path)


class TestRunReport:
    def _report(self):
        return RunReport(
            command="fit",
            config={"k": 4, "seed": 0},
            dataset={"path": "x.fbin", "n": 100, "dim": 8, "sha256": "ab"},
            iterations=[{"iter_index": 1, "wcss": 12.5, "timings": {"gemm": 0.1}}],
            final_metrics={"recall_at_100": 0.93, "wcss": 12.5,
                           "wall_clock_seconds": 1.23},
            phase_seconds={"gemm": 0.5},
            terminated_by="max_iters",
        )

    def test_json_round_trip_lossless(self):
        rep = self._report()
        back = RunReport.from_json(rep.to_json())
        assert back == rep

    def test_comparable_strips_timings(self):
        a, b = self._report(), self._report()
        b.phase_seconds = {"gemm": 99.0}
        b.iterations[0]["timings"] = {"gemm": 77.0}
        b.final_metrics["wall_clock_seconds"] = 55.0
        assert a.comparable() == b.comparable()

    def test_version_check(self):
        text = self._report().to_json().replace('"version": 1', '"version": 3')
        with pytest.raises(VersionMismatch):
            RunReport.from_json(text)


def test_sha256_stable(tmp_path):
    p = tmp_path / "f.bin"
    p.write_bytes(b"hello world")
    assert sha256_file(p) == sha256_file(p)
