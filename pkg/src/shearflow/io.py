"""Checkpoints, caches and exports.

Binary files are numpy ``.npz`` archives that carry their own description
(a JSON ``meta`` entry next to the arrays).
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

__all__ = [
    "config_hash",
    "save_checkpoint",
    "load_checkpoint",
    "export_basis",
    "load_arrays",
    "OperatorCache",
    "write_csv",
    "write_json",
]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_hash(record: dict) -> str:
    """SHA-256 of the canonical JSON form of ``record``."""
    text = json.dumps(_jsonable(record), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def save_checkpoint(path, config_hash: str, step: int, t: float, a) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps({"kind": "checkpoint", "config_hash": config_hash, "step": int(step), "t": float(t)})
    np.savez(path, meta=np.array(meta), a=np.asarray(a, dtype=float))
    return path


def load_checkpoint(path) -> dict:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        meta["a"] = data["a"].copy()
    return meta


def export_basis(basis, path, ops=None, key: dict | None = None) -> Path:
    """Write the basis matrices (and operators, if given) with their cache key.

    ``key`` overrides the default key (``basis.key()`` or ``ops.key()``).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "mass": basis.mass_matrix,
        "stiffness": basis.stiffness_matrix,
        "trace_normal": basis.trace_normal,
        "stokes_eigenvalues": basis.stokes_eigenvalues,
        "rotation": basis.rotation,
    }
    default = basis.key()
    if ops is not None:
        arrays.update(A=ops.A_matrix, F=ops.F_vector, G1=ops.G1, G2=ops.G2)
        if ops.B_tensor is not None:
            arrays["B"] = ops.B_tensor
        default = ops.key()
    key = default if key is None else key
    meta = {"kind": "basis" if ops is None else "operators", "key": _jsonable(key), "hash": config_hash(key)}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_arrays(path) -> tuple[dict, dict]:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        arrays = {k: data[k].copy() for k in data.files if k != "meta"}
    return meta, arrays


class OperatorCache:
    """Directory cache of assembled operators, keyed by the hash of their parameters.

    Loaded entries are compared against a freshly built basis before use, so
    a stale file can never silently replace an assembly.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path(self, key: dict) -> Path:
        return self.root / f"{config_hash(key)}.npz"

    def get(self, basis, nu, lift, build):
        """Return operators for ``(basis, nu, lift)``, building and storing them on a miss."""
        ops = None
        key = {**basis.key(), "nu": nu, **lift.key()}
        p = self.path(key)
        if p.exists():
            meta, arr = load_arrays(p)
            if meta.get("hash") == config_hash(key) and np.allclose(arr["stiffness"], basis.stiffness_matrix,
                                                                    rtol=0, atol=1e-12):
                ops = self._restore(basis, nu, lift, arr)
        if ops is None:
            ops = build(basis, nu, lift)
            export_basis(basis, p, ops, key=key)
        return ops

    @staticmethod
    def _restore(basis, nu, lift, arr):
        from .geometry import channel_grid
        from .operators import OperatorSet, dual_norm

        lgrid = channel_grid(basis.geometry, basis.nx, basis.neta, cuts=[lift.support_height], ncut=lift.ncut)
        ops = OperatorSet(basis, float(nu), lift, arr["A"], arr["F"], arr["G1"], arr["G2"], arr.get("B"),
                          basis.grid, basis.quadrature_fields, lgrid)
        ops.F_dual_norm = dual_norm(ops.F_vector, basis)
        return ops


def write_csv(path, header, rows, comment: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
