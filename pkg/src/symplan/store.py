"""Self-describing binary artifact container.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON header,
then the arrays listed in ``header["arrays"]`` back to back in little-endian
byte order. Output is byte-deterministic for equal inputs.
"""
import json
import struct

import numpy as np

MAGIC = b"SYMPLAN1"


def dumps_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_artifact(path, header, arrays):
    """``arrays`` is a list of (name, ndarray); dtypes are kept (as LE)."""
    specs = []
    blobs = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        specs.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(le).tobytes())
    head = dict(header)
    head["arrays"] = specs
    raw = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)


def read_artifact(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a symplan artifact")
    (n,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + n])
    offset = 12 + n
    arrays = {}
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset)
        arrays[spec["name"]] = arr.reshape(spec["shape"]).astype(dt.newbyteorder("="))
        offset += count * dt.itemsize
    return header, arrays
