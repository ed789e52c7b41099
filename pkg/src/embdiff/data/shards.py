"""Shard-based dataset storage: sequential tar archives plus a manifest.

Entries for one sample are contiguous and share the sample id as key:
``<id>.img`` (lossless PNG), ``<id>.json`` (labels + provenance), and one
``<id>.mask.<name>`` PNG per ground-truth mask. ``manifest.json`` at the
directory root records count, labelset, image side and per-shard byte sizes
and digests so corruption is detected before decoding.
"""

from __future__ import annotations

import hashlib
import io
import json
import tarfile
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from PIL import Image as PILImage

from ..errors import ContractError, IntegrityError
from .records import Provenance, SampleRecord

MANIFEST_NAME = "manifest.json"


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _mask_png_bytes(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(mask.astype(bool)).save(buf, format="PNG")
    return buf.getvalue()


def _add_member(tar: tarfile.TarFile, name: str, payload: bytes) -> None:
    info = tarfile.TarInfo(name=name)
    info.size = len(payload)
    info.mtime = 0  # fixed for byte-stable archives
    tar.addfile(info, io.BytesIO(payload))


def write_shards(
    records: Iterable[SampleRecord],
    out_dir: str | Path,
    shard_size: int = 512,
    labelset: tuple[str, ...] | None = None,
    extra_manifest: dict | None = None,
) -> dict:
    """Write records into ``shard-%05d.tar`` files and return the manifest."""
    if shard_size < 1:
        raise ContractError("shard_size must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    shards = []
    count = 0
    side = None
    it = iter(records)
    buffer: list[SampleRecord] = []

    def flush(buf):
        nonlocal count
        name = f"shard-{len(shards):05d}.tar"
        path = out_dir / name
        with tarfile.open(path, "w") as tar:
            for rec in buf:
                if "." in rec.id or "/" in rec.id:
                    raise ContractError(f"record id {rec.id!r} may not contain '.' or '/'")
                _add_member(tar, f"{rec.id}.img", _png_bytes(rec.image))
                meta = {
                    "labels": [int(v) for v in rec.labels],
                    "provenance": rec.provenance.to_dict(),
                }
                _add_member(tar, f"{rec.id}.json", json.dumps(meta).encode())
                for mname in sorted(rec.masks):
                    _add_member(tar, f"{rec.id}.mask.{mname}", _mask_png_bytes(rec.masks[mname]))
        data = path.read_bytes()
        shards.append(
            {
                "name": name,
                "count": len(buf),
                "bytes": len(data),
                "sha256": hashlib.sha256(data).hexdigest(),
            }
        )
        count += len(buf)

    for rec in it:
        if side is None:
            side = rec.side
        buffer.append(rec)
        if len(buffer) >= shard_size:
            flush(buffer)
            buffer = []
    if buffer:
        flush(buffer)

    manifest = {
        "count": count,
        "labelset": list(labelset) if labelset is not None else None,
        "side": side,
        "shards": shards,
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))
    return manifest


def read_manifest(shard_dir: str | Path) -> dict:
    path = Path(shard_dir) / MANIFEST_NAME
    if not path.exists():
        raise IntegrityError(f"missing {MANIFEST_NAME} in {shard_dir}")
    return json.loads(path.read_text())


def _decode_group(key: str, members: dict[str, bytes], shard_name: str) -> SampleRecord:
    if f"{key}.img" not in members or f"{key}.json" not in members:
        raise IntegrityError(f"incomplete entry group for {key!r} in {shard_name}")
    image = np.asarray(PILImage.open(io.BytesIO(members[f"{key}.img"])))
    meta = json.loads(members[f"{key}.json"].decode())
    masks = {}
    for name, payload in members.items():
        if name.startswith(f"{key}.mask."):
            mname = name[len(f"{key}.mask.") :]
            masks[mname] = np.asarray(PILImage.open(io.BytesIO(payload))).astype(bool)
    return SampleRecord(
        id=key,
        image=image,
        labels=np.asarray(meta["labels"], dtype=np.int8),
        masks=masks,
        provenance=Provenance.from_dict(meta["provenance"]),
    )


def read_shards(shard_dir: str | Path) -> Iterator[SampleRecord]:
    """Stream records shard by shard, verifying sizes, digests and counts."""
    shard_dir = Path(shard_dir)
    manifest = read_manifest(shard_dir)
    total = 0
    for entry in manifest["shards"]:
        path = shard_dir / entry["name"]
        if not path.exists():
            raise IntegrityError(f"missing shard {entry['name']}")
        data = path.read_bytes()
        if len(data) != entry["bytes"]:
            raise IntegrityError(
                f"shard {entry['name']} is {len(data)} bytes, manifest says {entry['bytes']}"
            )
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            raise IntegrityError(f"shard {entry['name']} digest mismatch")
        try:
            with tarfile.open(fileobj=io.BytesIO(data)) as tar:
                key = None
                members: dict[str, bytes] = {}
                n_in_shard = 0
                for info in tar:
                    this_key = info.name.split(".", 1)[0]
                    if key is not None and this_key != key:
                        yield _decode_group(key, members, entry["name"])
                        n_in_shard += 1
                        members = {}
                    key = this_key
                    members[info.name] = tar.extractfile(info).read()
                if key is not None:
                    yield _decode_group(key, members, entry["name"])
                    n_in_shard += 1
        except tarfile.TarError as exc:
            raise IntegrityError(f"shard {entry['name']} is unreadable: {exc}") from exc
        if n_in_shard != entry["count"]:
            raise IntegrityError(
                f"shard {entry['name']} holds {n_in_shard} records, manifest says {entry['count']}"
            )
        total += n_in_shard
    if total != manifest["count"]:
        raise IntegrityError(f"read {total} records, manifest says {manifest['count']}")


def load_records(shard_dir: str | Path) -> list[SampleRecord]:
    """Materialize every record; convenience for desk-scale datasets."""
    return list(read_shards(shard_dir))
