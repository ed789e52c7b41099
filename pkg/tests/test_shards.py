import numpy as np
import pytest

from embdiff.data.phantom import PhantomSpec, generate_phantom
from embdiff.data.records import Provenance, SampleRecord
from embdiff.data.shards import load_records, read_manifest, read_shards, write_shards
from embdiff.errors import IntegrityError


@pytest.fixture()
def records():
    recs = generate_phantom(PhantomSpec(seed=3), 5)
    recs[2].provenance = Provenance(kind="synthetic", strategy="reconstruction", source_ids=("ph-3-000000",))
    return recs


def test_round_trip_is_lossless(records, tmp_path):
    write_shards(records, tmp_path, shard_size=2, labelset=("a",) * 7)
    back = load_records(tmp_path)
    assert len(back) == len(records)
    for orig, rec in zip(records, back):
        assert rec.id == orig.id
        assert np.array_equal(rec.image, orig.image)
        assert np.array_equal(rec.labels, orig.labels)
        assert set(rec.masks) == set(orig.masks)
        for name in orig.masks:
            assert np.array_equal(rec.masks[name], orig.masks[name])
        assert rec.provenance == orig.provenance


def test_empty_dataset(tmp_path):
    manifest = write_shards([], tmp_path)
    assert manifest["count"] == 0
    assert list(read_shards(tmp_path)) == []


def test_manifest_counts(records, tmp_path):
    manifest = write_shards(records, tmp_path, shard_size=2)
    assert manifest["count"] == 5
    assert [s["count"] for s in manifest["shards"]] == [2, 2, 1]
    assert read_manifest(tmp_path)["side"] == 64


def test_truncated_shard_detected(records, tmp_path):
    write_shards(records, tmp_path, shard_size=3)
    target = sorted(tmp_path.glob("shard-*.tar"))[-1]
    data = target.read_bytes()
    target.write_bytes(data[:-1])
    with pytest.raises(IntegrityError, match=target.name):
        list(read_shards(tmp_path))


def test_corrupted_byte_detected(records, tmp_path):
    write_shards(records, tmp_path)
    target = sorted(tmp_path.glob("shard-*.tar"))[0]
    data = bytearray(target.read_bytes())
    data[len(data) // 2] ^= 0xFF
    target.write_bytes(bytes(data))
    with pytest.raises(IntegrityError, match=target.name):
        list(read_shards(tmp_path))


def test_missing_manifest(tmp_path):
    with pytest.raises(IntegrityError):
        list(read_shards(tmp_path))


def test_streaming_reader_is_lazy(records, tmp_path):
    write_shards(records, tmp_path, shard_size=1)
    stream = read_shards(tmp_path)
    first = next(stream)
    assert first.id == records[0].id


def test_ids_with_dots_rejected(tmp_path):
    rec = SampleRecord(
        id="bad.id",
        image=np.zeros((16, 16, 3), dtype=np.uint8),
        labels=np.zeros(7, dtype=np.int8),
    )
    with pytest.raises(Exception):
        write_shards([rec], tmp_path)
