"""Binary persistence for sample/embedding sets, pair lists, and checkpoints.

Sample container layout (little-endian throughout):
    magic "MSTE" | format version u32 | dtype u8 (0=f32, 1=f64) |
    row count u64 | dimension u64 | row-major values |
    identity label u32 per row | group tag u8 per row

Pair lists are UTF-8 text, one `idx_a idx_b genuine(0|1) group_index` line
per pair.

Checkpoints reuse the container preamble, then a text manifest (one line of
JSON metadata, then `name dims offset` per parameter) followed by the raw
f64 parameter data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import GroupTag, PairList, SampleSet
from .errors import FormatError

MAGIC = b"MSTE"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def save_sample_set(s: SampleSet, path, dtype_code: int = 1) -> None:
    if dtype_code not in _DTYPES:
        raise FormatError(f"unknown dtype code {dtype_code}")
    if s.n and (s.identities.min() < 0 or s.identities.max() > 0xFFFFFFFF):
        raise FormatError("identity labels overflow u32")
    if s.n and (s.groups.min() < 0 or s.groups.max() > 0xFF):
        raise FormatError("group tags overflow u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint8(dtype_code).tobytes())
        fh.write(np.uint64(s.n).tobytes())
        fh.write(np.uint64(s.dim).tobytes())
        fh.write(np.ascontiguousarray(s.values, dtype=_DTYPES[dtype_code]).tobytes())
        fh.write(s.identities.astype("<u4").tobytes())
        fh.write(s.groups.astype("<u1").tobytes())


def load_sample_set(path, group_tags: list[GroupTag] | None = None) -> SampleSet:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic")
        version = int(np.frombuffer(_read_exact(fh, 4, "version"), "<u4")[0])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        code = int(np.frombuffer(_read_exact(fh, 1, "dtype"), "<u1")[0])
        if code not in _DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        rows = int(np.frombuffer(_read_exact(fh, 8, "row count"), "<u8")[0])
        dim = int(np.frombuffer(_read_exact(fh, 8, "dimension"), "<u8")[0])
        itemsize = _DTYPES[code].itemsize
        values = np.frombuffer(
            _read_exact(fh, rows * dim * itemsize, "values"),
            _DTYPES[code]).reshape(rows, dim)
        idents = np.frombuffer(_read_exact(fh, rows * 4, "labels"), "<u4")
        groups = np.frombuffer(_read_exact(fh, rows, "groups"), "<u1")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    if group_tags is None:
        n_groups = int(groups.max()) + 1 if rows else 0
        group_tags = [GroupTag(i, f"g{i}") for i in range(n_groups)]
    return SampleSet(values.astype(np.float64), idents.astype(np.int64),
                     groups.astype(np.int64), group_tags)


def save_pairs(pairs: PairList, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(pairs.n):
            fh.write(f"{pairs.a[i]} {pairs.b[i]} "
                     f"{1 if pairs.genuine[i] else 0} {pairs.group[i]}\n")


def load_pairs(path) -> PairList:
    a, b, genuine, group = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields")
            try:
                a.append(int(parts[0]))
                b.append(int(parts[1]))
                flag = int(parts[2])
                group.append(int(parts[3]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if flag not in (0, 1):
                raise FormatError(f"{path}:{lineno}: genuine flag must be 0 or 1")
            genuine.append(bool(flag))
    return PairList(np.array(a, dtype=np.int64), np.array(b, dtype=np.int64),
                    np.array(genuine, dtype=bool), np.array(group, dtype=np.int64))


def save_params(path, params: dict[str, np.ndarray], meta: dict) -> None:
    """Checkpoint: container preamble + text manifest + raw f64 data."""
    lines = ["meta " + json.dumps(meta, sort_keys=True)]
    offset = 0
    blobs = []
    for name, arr in params.items():
        if " " in name:
            raise FormatError(f"parameter name {name!r} contains a space")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        dims = "x".join(str(d) for d in arr.shape)
        lines.append(f"{name} {dims} {offset}")
        offset += arr.size
        blobs.append(arr.tobytes())
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint8(1).tobytes())
        fh.write(np.uint64(len(manifest)).tobytes())
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic")
        version = int(np.frombuffer(_read_exact(fh, 4, "version"), "<u4")[0])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        code = int(np.frombuffer(_read_exact(fh, 1, "dtype"), "<u1")[0])
        if code != 1:
            raise FormatError(f"{path}: checkpoints must be f64")
        manifest_len = int(np.frombuffer(_read_exact(fh, 8, "manifest length"), "<u8")[0])
        manifest = _read_exact(fh, manifest_len, "manifest").decode("utf-8")
        data = fh.read()
    lines = [ln for ln in manifest.splitlines() if ln]
    if not lines or not lines[0].startswith("meta "):
        raise FormatError(f"{path}: manifest missing meta line")
    meta = json.loads(lines[0][5:])
    flat = np.frombuffer(data, "<f8")
    params: dict[str, np.ndarray] = {}
    for ln in lines[1:]:
        try:
            name, dims, offset = ln.split(" ")
            shape = tuple(int(d) for d in dims.split("x")) if dims else ()
            offset = int(offset)
        except ValueError as exc:
            raise FormatError(f"{path}: bad manifest line {ln!r}") from exc
        size = int(np.prod(shape)) if shape else 1
        if offset + size > flat.size:
            raise FormatError(f"{path}: parameter {name} exceeds data block")
        params[name] = flat[offset:offset + size].reshape(shape).copy()
    return params, meta


def sha256_file(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
