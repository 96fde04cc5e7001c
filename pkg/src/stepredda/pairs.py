"""Data export for generalized pairs plots of the selected wavelengths.

Rendering is left to an external plotter; this writes a long-format table
and a manifest listing the variable pairs.
"""

from __future__ import annotations

import csv
import itertools
import json
from pathlib import Path

import numpy as np

from .data import LabeledSpectra, format_float, format_wavelength

LONG_TABLE = "pairs_long.csv"
MANIFEST = "pairs_manifest.json"
LONG_HEADER = ["row", "variable", "wavelength", "value", "class"]


def export_pairs_data(data: LabeledSpectra, selected, out_dir):
    """Write ``pairs_long.csv`` and ``pairs_manifest.json`` into ``out_dir``.

    Returns the two paths.
    """
    selected = [int(j) for j in selected]
    if not selected:
        raise ValueError("no variables selected")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / LONG_TABLE
    with table.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for n in range(data.n_samples):
            label = data.class_names[data.labels[n]] if data.labels is not None else ""
            for j in selected:
                w.writerow([n, j, format_wavelength(data.wavelengths[j]), format_float(data.X[n, j]), label])
    manifest = {
        "table": LONG_TABLE,
        "unit": data.unit,
        "n_rows": data.n_samples,
        "variables": [{"column": j, "wavelength": float(data.wavelengths[j])} for j in selected],
        "pairs": [list(p) for p in itertools.combinations(selected, 2)],
        "class_names": list(data.class_names),
    }
    mpath = out / MANIFEST
    mpath.write_text(json.dumps(manifest, indent=1) + "\n")
    return table, mpath


def read_pairs_long(path):
    """Re-assemble the (rows x selected) matrix and labels from a long table.

    Returns ``(columns, matrix, class_labels)``, columns in first-seen order.
    """
    values: dict = {}
    labels: dict = {}
    columns: list = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            n, j = int(rec["row"]), int(rec["variable"])
            if j not in columns:
                columns.append(j)
            values[(n, j)] = float(rec["value"])
            labels[n] = rec["class"]
    rows = sorted(labels)
    matrix = np.array([[values[(n, j)] for j in columns] for n in rows]).reshape(len(rows), len(columns))
    return columns, matrix, [labels[n] for n in rows]
