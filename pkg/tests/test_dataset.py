"""Dataset binary format, point files, splits, manifests."""
import json

import numpy as np
import pytest

import g2link.dataset as ds
import g2link.link as lk
import g2link.quintic as q


@pytest.fixture(scope="module")
def g2batch():
    batch = q.sample_batch(100, seed=23)
    w, ze = batch.chart_data()
    h = 2.0 * q.fs_pullback(w, ze, batch.a, batch.e)
    c = q.residue_coeff(ze, batch.a, batch.e)
    theta = np.random.default_rng(0).uniform(0, 2 * np.pi, len(batch))
    return lk.assemble_g2_batch(w, ze, batch.a, batch.e, theta, h, c, 1.9)


def header():
    return ds.DatasetHeader("fs", "global", 100, 23, 1.0, 1.9, 2.0)


def test_dataset_roundtrip_bitwise(tmp_path, g2batch):
    path = tmp_path / "data.bin"
    ds.save_dataset(path, g2batch, header())
    back, h = ds.load_dataset(path)
    assert np.array_equal(back.to_matrix(), g2batch.to_matrix())
    assert h.mode == "fs" and h.upsilon_norm == "global"
    assert h.count == 100 and h.seed == 23
    assert h.lam == 1.9 and h.kahler_scale == 2.0


def test_dataset_rejects_bad_magic(tmp_path, g2batch):
    path = tmp_path / "data.bin"
    ds.save_dataset(path, g2batch, header())
    raw = bytearray(path.read_bytes())
    raw[:8] = b"??device"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="magic"):
        ds.load_dataset(path)


def test_dataset_rejects_version_mismatch(tmp_path, g2batch):
    path = tmp_path / "data.bin"
    ds.save_dataset(path, g2batch, header())
    raw = bytearray(path.read_bytes())
    raw[8:12] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        ds.load_dataset(path)


def test_dataset_rejects_corruption(tmp_path, g2batch):
    path = tmp_path / "data.bin"
    ds.save_dataset(path, g2batch, header())
    raw = bytearray(path.read_bytes())
    raw[200] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        ds.load_dataset(path)


def test_point_file_roundtrip(tmp_path):
    batch = q.sample_batch(64, seed=3)
    path = tmp_path / "points.bin"
    ds.save_points(path, batch, 3)
    back, seed = ds.load_points(path)
    assert seed == 3
    assert np.array_equal(back.z, batch.z)
    assert np.array_equal(back.a, batch.a)
    assert np.array_equal(back.weight, batch.weight)


def test_point_file_checksum(tmp_path):
    batch = q.sample_batch(16, seed=3)
    path = tmp_path / "points.bin"
    ds.save_points(path, batch, 3)
    raw = bytearray(path.read_bytes())
    raw[60] ^= 0x01
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        ds.load_points(path)


# ---------------------------------------------------------------------------
# splits

def test_split_fractions_and_determinism():
    labels = ds.split_assign(200000, seed=11)
    counts = np.bincount(labels, minlength=3) / 200000
    assert abs(counts[0] - 0.90) < 0.005
    assert abs(counts[1] - 0.05) < 0.005
    assert abs(counts[2] - 0.05) < 0.005
    assert np.array_equal(labels, ds.split_assign(200000, seed=11))
    assert not np.array_equal(labels, ds.split_assign(200000, seed=12))


def test_split_pure_function_of_index_and_seed():
    # membership is independent of the dataset size
    small = ds.split_assign(1000, seed=5)
    large = ds.split_assign(5000, seed=5)
    assert np.array_equal(small, large[:1000])


def test_split_parse():
    assert ds.parse_fractions("0.9:0.05:0.05") == (0.9, 0.05, 0.05)
    with pytest.raises(ValueError):
        ds.parse_fractions("0.9:0.1")
    with pytest.raises(ValueError):
        ds.split_assign(10, 0, (0.5, 0.1, 0.1))


def test_manifest(tmp_path):
    src = tmp_path / "input.bin"
    src.write_bytes(b"hello world")
    out = tmp_path / "manifest.json"
    ds.write_manifest(out, "sample", {"count": 5}, inputs={"points": str(src)})
    doc = json.loads(out.read_text())
    assert doc["command"] == "sample"
    assert doc["config"]["count"] == 5
    assert doc["inputs"]["points"] == \
        "b94d27b9934d3e08a52e52d7da7dabfac484efe37a5380ee9088f7ace2efcde9"
    assert "version" in doc
