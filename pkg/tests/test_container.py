"""Container format: byte-exact round trips and malformed-file rejection."""

import struct

import numpy as np
import pytest

from commonground.container import (
    BadMagicError,
    ContainerError,
    DuplicateNameError,
    TruncatedContainerError,
    read_container,
    write_container,
)


@pytest.fixture
def sample_tensors():
    rng = np.random.default_rng(11)
    return {
        "alpha": rng.standard_normal((3, 4)).astype(np.float32),
        "beta/2": rng.standard_normal(7).astype(np.float64),
        "gamma": rng.standard_normal((2, 3, 4, 5)).astype(np.float32),
    }


def test_round_trip_bit_exact(tmp_path, sample_tensors):
    path = tmp_path / "t.gtf"
    write_container(str(path), sample_tensors)
    loaded = read_container(str(path))
    assert set(loaded) == set(sample_tensors)
    for name, arr in sample_tensors.items():
        assert loaded[name].dtype == arr.dtype
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.tobytes()


def test_write_is_deterministic(tmp_path, sample_tensors):
    p1, p2 = tmp_path / "a.gtf", tmp_path / "b.gtf"
    write_container(str(p1), sample_tensors)
    write_container(str(p2), sample_tensors)
    assert p1.read_bytes() == p2.read_bytes()


def test_no_partial_file_left_behind(tmp_path, sample_tensors):
    path = tmp_path / "t.gtf"
    write_container(str(path), sample_tensors)
    assert not (tmp_path / "t.gtf.partial").exists()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.gtf"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(BadMagicError):
        read_container(str(path))


def test_truncated_table_rejected(tmp_path, sample_tensors):
    path = tmp_path / "t.gtf"
    write_container(str(path), sample_tensors)
    blob = path.read_bytes()
    path.write_bytes(blob[:20])
    with pytest.raises(TruncatedContainerError):
        read_container(str(path))


def test_truncated_payload_rejected(tmp_path, sample_tensors):
    path = tmp_path / "t.gtf"
    write_container(str(path), sample_tensors)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(TruncatedContainerError):
        read_container(str(path))


def test_duplicate_name_rejected(tmp_path):
    # Hand-assemble a file whose table repeats one name.
    name = b"x"
    payload = np.ones(2, dtype="<f4").tobytes()
    entry = struct.pack("<I", len(name)) + name + struct.pack("<BB", 0, 1)
    table = b"GTF1" + struct.pack("<I", 2)
    body = b""
    offset = len(table) + 2 * (len(entry) + 8 + 8)
    for _ in range(2):
        body += entry + struct.pack("<Q", 2) + struct.pack("<Q", offset)
        offset += len(payload)
    path = tmp_path / "dup.gtf"
    path.write_bytes(table + body + payload + payload)
    with pytest.raises(DuplicateNameError):
        read_container(str(path))


def test_unknown_dtype_code_rejected(tmp_path):
    name = b"x"
    table = (
        b"GTF1"
        + struct.pack("<I", 1)
        + struct.pack("<I", len(name))
        + name
        + struct.pack("<BB", 9, 1)
        + struct.pack("<Q", 2)
        + struct.pack("<Q", 40)
    )
    path = tmp_path / "odd.gtf"
    path.write_bytes(table + b"\x00" * 16)
    with pytest.raises(ContainerError):
        read_container(str(path))


def test_zero_extent_rejected_on_read(tmp_path):
    name = b"x"
    table = (
        b"GTF1"
        + struct.pack("<I", 1)
        + struct.pack("<I", len(name))
        + name
        + struct.pack("<BB", 0, 2)
        + struct.pack("<QQ", 3, 0)
        + struct.pack("<Q", 48)
    )
    path = tmp_path / "zero.gtf"
    path.write_bytes(table)
    with pytest.raises(ContainerError):
        read_container(str(path))


def test_overlapping_payloads_rejected(tmp_path):
    name_a, name_b = b"a", b"b"
    payload = np.ones(4, dtype="<f4").tobytes()
    header = b"GTF1" + struct.pack("<I", 2)
    entry_a = struct.pack("<I", 1) + name_a + struct.pack("<BB", 0, 1) + struct.pack("<Q", 4)
    entry_b = struct.pack("<I", 1) + name_b + struct.pack("<BB", 0, 1) + struct.pack("<Q", 4)
    table_len = len(header) + len(entry_a) + 8 + len(entry_b) + 8
    blob = (
        header
        + entry_a
        + struct.pack("<Q", table_len)
        + entry_b
        + struct.pack("<Q", table_len + 8)  # starts inside tensor a
        + payload
        + payload
    )
    path = tmp_path / "overlap.gtf"
    path.write_bytes(blob)
    with pytest.raises(ContainerError):
        read_container(str(path))


def test_writer_rejects_bad_inputs(tmp_path):
    path = str(tmp_path / "t.gtf")
    with pytest.raises(ValueError):
        write_container(path, {})
    with pytest.raises(ValueError):
        write_container(path, {"x": np.ones(3, dtype=np.int32)})
    with pytest.raises(ValueError):
        write_container(path, {"x": np.ones((0, 2), dtype=np.float32)})


def test_read_copies_do_not_alias_file_buffer(tmp_path, sample_tensors):
    path = tmp_path / "t.gtf"
    write_container(str(path), sample_tensors)
    loaded = read_container(str(path))
    for arr in loaded.values():
        assert arr.flags.writeable
