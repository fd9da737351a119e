import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from globnorm.archive import MAGIC, ArchiveError, ModelArchive, dumps, load_model, loads, save_model
from globnorm.inference import decode

from conftest import small_instance


def archive_for(task, seed=0):
    model, x, _ = small_instance(task, seed=seed)
    raw = model.params.copy()
    raw["bd"] = raw["bd"] + 1.0
    return ModelArchive(model, raw, {"note": "test", "seed": seed}), x


@settings(max_examples=10)
@given(seed=st.integers(0, 10**5), task=st.sampled_from(["tagging", "parsing", "compression"]))
def test_save_load_save_is_byte_identical(seed, task):
    archive, _ = archive_for(task, seed)
    data = dumps(archive)
    again = loads(data)
    assert dumps(again) == data
    assert again.model.params.equals(archive.model.params)
    assert again.raw_params.equals(archive.raw_params)
    assert again.metadata == archive.metadata
    assert again.model.system.descriptor() == archive.model.system.descriptor()


def test_loaded_model_decodes_identically(tmp_path):
    from globnorm.corpus import generate_synthetic
    archive, _ = archive_for("parsing", seed=3)
    save_model(tmp_path / "m.gntp", archive)
    loaded = load_model(tmp_path / "m.gntp")
    _, X, _ = generate_synthetic("projective-trees", 10, seed=4)
    for x in X:
        a = decode(x, archive.model, 3, "global")
        b = decode(x, loaded.model, 3, "global")
        assert a.decisions == b.decisions and a.raw == b.raw and a.step_logz == b.step_logz


def test_corrupted_magic():
    data = bytearray(dumps(archive_for("tagging")[0]))
    data[:4] = b"NOPE"
    with pytest.raises(ArchiveError, match="magic"):
        loads(bytes(data))


def test_unsupported_version_is_detected_first():
    data = bytearray(dumps(archive_for("tagging")[0]))
    data[4:6] = struct.pack("<H", 99)
    data[-1] ^= 0xFF  # also break the checksum: the version must be reported
    with pytest.raises(ArchiveError, match="version 99"):
        loads(bytes(data))


@pytest.mark.parametrize("cut", [3, 20, 200, -1])
def test_truncation_and_corruption(cut):
    data = dumps(archive_for("compression")[0])
    with pytest.raises(ArchiveError):
        loads(data[:cut])
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0x01
    with pytest.raises(ArchiveError, match="checksum"):
        loads(bytes(flipped))


def test_layout_prefix():
    data = dumps(archive_for("tagging")[0])
    magic, version, hlen = struct.unpack_from("<4sHI", data)
    assert magic == MAGIC and version == 1
    assert data[10:10 + hlen].startswith(b"{")
