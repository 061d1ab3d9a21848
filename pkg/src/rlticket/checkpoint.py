"""Content-hashed network checkpoints (.npz).

A checkpoint holds one or more networks: their specs, parameters, optional
masks and a free-form JSON metadata dict. The hash covers the metadata, the
specs and every array's bytes, so it is independent of zip timestamps.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .netcore import MaskSet, NetworkSpec, ParamSet

FORMAT_VERSION = 1


def content_hash(specs, params_list, masks_list, meta) -> str:
    h = hashlib.sha256()
    header = {"format": FORMAT_VERSION, "specs": [s.to_dict() for s in specs], "meta": meta}
    h.update(json.dumps(header, sort_keys=True).encode())
    for p in params_list:
        for a in p.arrays():
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    for m in masks_list:
        if m is None:
            h.update(b"dense")
            continue
        for a in m.masks:
            h.update(np.ascontiguousarray(a, dtype=bool).tobytes())
    return h.hexdigest()


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(path, specs, params_list, masks_list=None, meta=None) -> str:
    """Write a checkpoint and return its content hash."""
    meta = dict(meta or {})
    masks_list = list(masks_list) if masks_list is not None else [None] * len(params_list)
    digest = content_hash(specs, params_list, masks_list, meta)
    arrays = {}
    for n, p in enumerate(params_list):
        for k, (w, b) in enumerate(zip(p.weights, p.biases)):
            arrays[f"net{n}_w{k}"] = w
            arrays[f"net{n}_b{k}"] = b
    for n, m in enumerate(masks_list):
        if m is not None:
            for k, a in enumerate(m.masks):
                arrays[f"net{n}_m{k}"] = a
    header = {"format": FORMAT_VERSION, "specs": [s.to_dict() for s in specs], "meta": meta, "sha256": digest}
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())
    return digest


def load_checkpoint(path, verify: bool = True):
    """Returns ``(specs, params_list, masks_list, meta, sha256)``."""
    path = Path(path)
    if not path.exists():
        raise PreconditionError(f"checkpoint {path} does not exist")
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        specs = [NetworkSpec.from_dict(d) for d in header["specs"]]
        params_list, masks_list = [], []
        for n, spec in enumerate(specs):
            L = spec.n_layers
            params_list.append(ParamSet([data[f"net{n}_w{k}"].copy() for k in range(L)],
                                        [data[f"net{n}_b{k}"].copy() for k in range(L)]))
            if f"net{n}_m0" in data:
                masks_list.append(MaskSet([data[f"net{n}_m{k}"].copy() for k in range(L)]))
            else:
                masks_list.append(None)
    if verify:
        digest = content_hash(specs, params_list, masks_list, header["meta"])
        if digest != header["sha256"]:
            raise PreconditionError(f"checkpoint {path} fails its content hash")
    return specs, params_list, masks_list, header["meta"], header["sha256"]
