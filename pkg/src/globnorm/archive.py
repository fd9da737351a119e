"""Binary model archives.

Layout::

    b"GNTP" | version: u16 LE | header length: u32 LE | header (UTF-8 JSON)
    | arrays (float64 LE, header order) | SHA-256 of everything before

The header holds the task, decision vocabulary, feature template text,
group vocabularies, array names/shapes and training metadata. JSON is
written with sorted keys so identical models give identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import Vocabulary, parse_template
from .model import NeuralModel
from .network import Params
from .systems import system_from_descriptor

MAGIC = b"GNTP"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


class ArchiveError(ValueError):
    pass


@dataclass
class ModelArchive:
    model: NeuralModel                 # decoding (averaged) parameters
    raw_params: Params | None = None   # last training iterate
    metadata: dict = field(default_factory=dict)


def _arrays(params: Params, prefix: str):
    return [(f"{prefix}/{k}", v) for k, v in params.items()]


def dumps(archive: ModelArchive) -> bytes:
    m = archive.model
    arrays = _arrays(m.params, "avg")
    if archive.raw_params is not None:
        arrays += _arrays(archive.raw_params, "raw")
    header = {
        "system": m.system.descriptor(),
        "template": m.template.to_text(),
        "vocabularies": {g.name: list(g.vocab.items) for g in m.template.groups},
        "activation": m.activation,
        "arrays": [[name, list(a.shape)] for name, a in arrays],
        "metadata": archive.metadata,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    body = _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes
    body += b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> ModelArchive:
    if len(data) < _PREFIX.size:
        raise ArchiveError("truncated archive")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ArchiveError(f"bad magic {magic!r}; not a model archive")
    if version != VERSION:
        raise ArchiveError(f"unsupported archive version {version} (this build reads {VERSION})")
    if len(data) < _PREFIX.size + hlen + 32:
        raise ArchiveError("truncated archive")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ArchiveError("checksum mismatch; archive is corrupted or truncated")
    header = json.loads(body[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    offset = _PREFIX.size + hlen
    tables: dict[str, dict] = {"avg": {}, "raw": {}}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) * 8
        if offset + n > len(body):
            raise ArchiveError("array data shorter than the header declares")
        arr = np.frombuffer(body, dtype="<f8", count=n // 8, offset=offset).reshape(shape).astype(np.float64)
        prefix, key = name.split("/", 1)
        tables[prefix][key] = arr
        offset += n
    if offset != len(body):
        raise ArchiveError("trailing bytes after array data")

    system = system_from_descriptor(header["system"])
    template = parse_template(header["template"], load_vocab=False)
    for g in template.groups:
        g.vocab = Vocabulary.from_items(header["vocabularies"][g.name])
    model = NeuralModel(system, template, Params(tables["avg"]), header["activation"])
    raw = Params(tables["raw"]) if tables["raw"] else None
    return ModelArchive(model, raw, header["metadata"])


def save_model(path, archive: ModelArchive) -> None:
    Path(path).write_bytes(dumps(archive))


def load_model(path) -> ModelArchive:
    return loads(Path(path).read_bytes())
