"""Deterministic file formats: binary array container, CSV, metrics JSON.

The container exists because byte-identical outputs are part of the
contract and zip-based formats embed timestamps. Layout:

    magic "IMNE1\\n" | uint64-le header length | header JSON | raw arrays

The header is compact JSON with sorted keys holding a user `meta` dict
plus dtype/shape for every array; array payloads follow in sorted name
order as C-contiguous bytes. Writing the same content twice yields the
same bytes.
"""

import json
import os

import numpy as np

from .errors import IoError

MAGIC = b"IMNE1\n"

# dtypes allowed in containers; anything else is a programming error.
_DTYPES = {"float64", "int64", "bool"}


def _encode_header(meta, arrays):
    spec = {
        name: {"dtype": str(a.dtype), "shape": list(a.shape)}
        for name, a in arrays.items()
    }
    return json.dumps({"meta": meta, "arrays": spec},
                      sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_container(path, meta, arrays):
    """Write a meta dict plus named numpy arrays to `path` deterministically."""
    clean = {}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if str(arr.dtype) not in _DTYPES:
            raise IoError(f"array {name!r} has unsupported dtype {arr.dtype}")
        clean[name] = arr
    header = _encode_header(meta, clean)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for name in sorted(clean):
            f.write(clean[name].tobytes())
    os.replace(tmp, path)


def read_container(path):
    """Read back (meta, arrays) from a container file."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    if not blob.startswith(MAGIC):
        raise IoError(f"{path}: bad magic, not a container file")
    off = len(MAGIC)
    hlen = int.from_bytes(blob[off:off + 8], "little")
    off += 8
    try:
        header = json.loads(blob[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise IoError(f"{path}: corrupt header: {e}") from e
    off += hlen
    arrays = {}
    for name in sorted(header["arrays"]):
        spec = header["arrays"][name]
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        chunk = blob[off:off + nbytes]
        if len(chunk) != nbytes:
            raise IoError(f"{path}: truncated payload for array {name!r}")
        arrays[name] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise IoError(f"{path}: {len(blob) - off} trailing bytes")
    return header["meta"], arrays


def format_cell(value):
    """One CSV cell: floats via repr, None as empty, everything else str."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, fieldnames, rows):
    """Write dict rows in a fixed column order with deterministic formatting."""
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(format_cell(row.get(name)) for name in fieldnames))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of write_csv: list of dicts with None for empty cells.

    Cells parse as float when possible, leaving ids/labels as strings is
    the caller's concern (history files are numeric throughout).
    """
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise IoError(f"{path}: empty CSV")
    fields = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        row = {}
        for name, cell in zip(fields, cells):
            if cell == "":
                row[name] = None
            else:
                try:
                    row[name] = float(cell)
                except ValueError:
                    row[name] = cell
        rows.append(row)
    return rows


def write_json(path, payload):
    """Deterministic JSON: sorted keys, compact floats, trailing newline."""
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def sha256_of_array(arr):
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()
