"""JSON model/state files, JSONL trajectory logs and ensemble CSV tables.

Complex scalars are ``[re, im]`` pairs and matrices are row-major nested
lists of them.  Sector indices in files are 0-based, as in the API.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from collections import defaultdict

import numpy as np

from .errors import InputError
from .model import BlockDensity, HybridModel, HybridPureState, PureLindbladModel

CSV_COLUMNS = ("t", "block", "row", "col", "re", "im", "stderr")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise InputError(f"complex scalar must be [re, im], got {value!r}")


def vector_from_json(data) -> np.ndarray:
    if not isinstance(data, list):
        raise InputError("vector must be a list of complex scalars")
    return np.array([_complex(z) for z in data], dtype=complex)


def matrix_from_json(data) -> np.ndarray:
    if not isinstance(data, list) or not all(isinstance(row, list) for row in data):
        raise InputError("matrix must be a list of rows")
    rows = [[_complex(z) for z in row] for row in data]
    if len({len(r) for r in rows}) > 1:
        raise InputError("matrix rows have different lengths")
    return np.array(rows, dtype=complex).reshape(len(rows), len(rows[0]) if rows else 0)


def vector_to_json(v) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]


def matrix_to_json(m) -> list:
    return [vector_to_json(row) for row in np.asarray(m, dtype=complex)]


def model_from_dict(data: dict):
    try:
        kind = data["kind"]
        if kind == "hybrid":
            hs = [matrix_from_json(h) for h in data["hamiltonians"]]
            dims = data.get("dims")
            if dims is not None and list(dims) != [h.shape[0] for h in hs]:
                raise InputError(f"dims {dims} disagree with Hamiltonian shapes")
            couplings = {}
            for c in data.get("couplings", []):
                key = (int(c["to"]), int(c["from"]))
                if key in couplings:
                    raise InputError(f"duplicate coupling {key}")
                couplings[key] = matrix_from_json(c["matrix"])
            return HybridModel(tuple(hs), couplings)
        if kind == "pure":
            h = matrix_from_json(data["hamiltonian"])
            if "dim" in data and int(data["dim"]) != h.shape[0]:
                raise InputError(f"dim {data['dim']} disagrees with the Hamiltonian shape")
            ops = tuple(matrix_from_json(v) for v in data.get("lindblad_ops", []))
            return PureLindbladModel(h, ops)
    except KeyError as exc:
        raise InputError(f"model file is missing field {exc}") from exc
    raise InputError(f"unknown model kind {data.get('kind')!r}")


def model_to_dict(model) -> dict:
    if isinstance(model, HybridModel):
        return {
            "kind": "hybrid",
            "dims": list(model.dims),
            "hamiltonians": [matrix_to_json(h) for h in model.hamiltonians],
            "couplings": [{"to": to, "from": frm, "matrix": matrix_to_json(g)}
                          for (to, frm), g in model.couplings.items()],
        }
    return {
        "kind": "pure",
        "dim": model.dim,
        "hamiltonian": matrix_to_json(model.hamiltonian),
        "lindblad_ops": [matrix_to_json(v) for v in model.lindblad_ops],
    }


def state_from_dict(data: dict):
    try:
        kind = data["kind"]
        if kind == "pure_state":
            return HybridPureState(int(data.get("sector", 0)), vector_from_json(data["psi"]))
        if kind == "density":
            return BlockDensity(tuple(matrix_from_json(b) for b in data["blocks"]))
    except KeyError as exc:
        raise InputError(f"state file is missing field {exc}") from exc
    raise InputError(f"unknown state kind {data.get('kind')!r}")


def state_to_dict(state) -> dict:
    if isinstance(state, HybridPureState):
        return {"kind": "pure_state", "sector": state.sector, "psi": vector_to_json(state.psi)}
    return {"kind": "density", "blocks": [matrix_to_json(b) for b in state.blocks]}


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def load_model(path):
    return model_from_dict(_load_json(path))


def load_state(path):
    return state_from_dict(_load_json(path))


def save_json(path, data) -> None:
    atomic_write(path, json.dumps(data, indent=2) + "\n")


# -- ensemble tables ----------------------------------------------------------------

def _num(x: float) -> str:
    return repr(float(x))


def ensemble_to_csv(estimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k, (t, dens) in enumerate(zip(estimate.grid, estimate.mean_blocks)):
        for a, (block, err) in enumerate(zip(dens.blocks, estimate.stderr[k])):
            for i in range(block.shape[0]):
                for j in range(block.shape[1]):
                    z = block[i, j]
                    w.writerow((_num(t), a, i, j, _num(z.real), _num(z.imag), _num(err[i, j])))
    return buf.getvalue()


def ensemble_from_csv(text: str, method: str = "csv"):
    from .ensemble import EnsembleEstimate

    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise InputError("ensemble table is empty")
    if tuple(rows[0].keys()) != CSV_COLUMNS:
        raise InputError(f"ensemble table must have columns {','.join(CSV_COLUMNS)}")
    entries = defaultdict(dict)
    sizes = defaultdict(int)
    for r in rows:
        t, a, i, j = float(r["t"]), int(r["block"]), int(r["row"]), int(r["col"])
        entries[t][(a, i, j)] = (complex(float(r["re"]), float(r["im"])), float(r["stderr"]))
        sizes[a] = max(sizes[a], i + 1, j + 1)
    dims = [sizes[a] for a in range(len(sizes))]
    grid = sorted(entries)
    means, errs = [], []
    for t in grid:
        blocks = [np.zeros((n, n), dtype=complex) for n in dims]
        eblocks = [np.zeros((n, n)) for n in dims]
        for (a, i, j), (z, e) in entries[t].items():
            blocks[a][i, j] = z
            eblocks[a][i, j] = e
        means.append(BlockDensity(tuple(blocks)))
        errs.append(eblocks)
    return EnsembleEstimate(tuple(grid), means, errs, 0, method)


def load_ensemble_csv(path):
    with open(path, newline="") as fh:
        return ensemble_from_csv(fh.read())


# -- trajectory logs ------------------------------------------------------------------

def trajectory_lines(record, method: str = "pdp"):
    """JSONL lines for one trajectory: jumps and grid samples in time order."""
    traj = record.stream_index
    items = []
    for e in record.events:
        obj = {"traj": traj, "t": float(e.t), "event": "jump"}
        if method == "mcwf":
            obj["channel"] = int(e.channel)
        else:
            obj["from"], obj["to"] = int(e.from_sector), int(e.to_sector)
        obj["psi"] = vector_to_json(e.psi)
        items.append((e.t, 0, obj))
    for t, x in record.grid_states:
        obj = {"traj": traj, "t": float(t), "event": "sample", "sector": int(x.sector),
               "psi": vector_to_json(x.psi)}
        items.append((t, 1, obj))
    items.sort(key=lambda it: (it[0], it[1]))
    return [json.dumps(obj) for _, _, obj in items]


def trajectories_to_jsonl(records, method: str) -> str:
    lines = [json.dumps({"method": method})]
    for rec in records:
        lines.extend(trajectory_lines(rec, method))
    return "\n".join(lines) + "\n"
