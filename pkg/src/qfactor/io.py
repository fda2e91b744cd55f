"""On-disk formats: panel CSV, bare matrix CSV, and canonical JSON.

Panel CSV has a header row ``id,t1,t2,...,tT`` and one row per variable with
empty cells for missing entries.  Matrices are written headerless.  Floats
are serialized with ``repr`` so files round-trip bit-exactly, and JSON is
emitted with sorted keys so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .panel import FactorFit, PanelData

__all__ = [
    "read_panel_csv",
    "write_panel_csv",
    "read_matrix_csv",
    "write_matrix_csv",
    "dump_json",
    "fit_to_dict",
    "fit_from_dict",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_panel_csv(path, panel: PanelData, ids: Optional[list[str]] = None) -> None:
    path = Path(path)
    if ids is None:
        ids = [f"var{i + 1}" for i in range(panel.p)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"t{t + 1}" for t in range(panel.T)])
        for i in range(panel.p):
            row = [ids[i]]
            for t in range(panel.T):
                row.append(_fmt(panel.values[i, t]) if panel.mask[i, t] else "")
            writer.writerow(row)


def read_panel_csv(path) -> PanelData:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "id":
            raise ValueError(f"{path}: expected a panel CSV with an 'id' header column")
        T = len(header) - 1
        values_rows: list[list[float]] = []
        mask_rows: list[list[bool]] = []
        for row in reader:
            if not row:
                continue
            cells = row[1:]
            if len(cells) != T:
                raise ValueError(f"{path}: row {row[0]!r} has {len(cells)} cells, expected {T}")
            values_rows.append([float(c) if c != "" else 0.0 for c in cells])
            mask_rows.append([c != "" for c in cells])
    return PanelData(np.asarray(values_rows, dtype=float), np.asarray(mask_rows, dtype=bool))


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([_fmt(x) for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [[float(c) for c in row] for row in csv.reader(fh) if row]
    return np.asarray(rows, dtype=float)


def dump_json(path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def fit_to_dict(fit: FactorFit) -> dict:
    resid = fit.residuals
    return {
        "loadings": fit.loadings.tolist(),
        "scores": fit.scores.tolist(),
        "residual_summary": {
            "max_abs": float(np.abs(resid).max()),
            "mean_abs": float(np.abs(resid).mean()),
            "rms": float(np.sqrt(np.mean(resid**2))),
        },
        "loss": fit.loss,
        "iterations": fit.iterations,
        "tau": fit.tau,
        "converged": fit.converged,
    }


def fit_from_dict(d: dict, panel: Optional[PanelData] = None) -> FactorFit:
    loadings = np.asarray(d["loadings"], dtype=float)
    scores = np.asarray(d["scores"], dtype=float)
    if panel is not None:
        residuals = np.where(panel.mask, panel.values - loadings @ scores, 0.0)
    else:
        residuals = np.zeros((loadings.shape[0], scores.shape[1]))
    return FactorFit(
        loadings=loadings,
        scores=scores,
        residuals=residuals,
        loss=float(d["loss"]),
        iterations=int(d["iterations"]),
        tau=d["tau"],
        converged=bool(d["converged"]),
    )
