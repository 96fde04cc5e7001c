"""Labelled spectra and CSV ingestion.

One CSV layout is supported: a header row holding the wavelength of every
spectral column plus a named label column, then one spectrum per row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import NonFinite, ParseError, UnknownLabel

UNITS = ("cm-1", "nm", "index")


@dataclass
class LabeledSpectra:
    """An N x P absorbance matrix with class labels and a spectral axis.

    ``labels`` holds 0-based indices into ``class_names`` (None for an
    unlabelled test set).
    """

    X: NDArray
    labels: NDArray | None
    wavelengths: NDArray
    unit: str = "index"
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("absorbance matrix must be two-dimensional")
        self.wavelengths = np.asarray(self.wavelengths, dtype=float)
        if self.wavelengths.shape != (self.X.shape[1],):
            raise ValueError(f"{self.X.shape[1]} columns but {self.wavelengths.shape[0]} wavelengths")
        if self.unit not in UNITS:
            raise ValueError(f"unit must be one of {UNITS}, got {self.unit!r}")
        if not np.all(np.isfinite(self.X)):
            r, c = np.argwhere(~np.isfinite(self.X))[0]
            raise NonFinite("non-finite absorbance", row=int(r), column=int(c))
        if self.unit != "index" and self.X.shape[1] > 1:
            d = np.diff(self.wavelengths)
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("wavelength axis must be strictly monotone")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.X.shape[0],):
                raise ValueError(f"{self.X.shape[0]} spectra but {self.labels.shape[0]} labels")
            G = len(self.class_names)
            if G == 0:
                G = int(self.labels.max()) + 1 if self.labels.size else 0
                self.class_names = [str(g + 1) for g in range(G)]
            if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= G):
                raise ValueError("label index outside 0..G-1")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_channels(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        if text.strip() == "":
            raise NonFinite("empty cell", row=row, column=col) from None
        raise ParseError(f"cannot parse {text!r} as a number", row=row, column=col) from None
    if not math.isfinite(value):
        raise NonFinite(f"non-finite value {text!r}", row=row, column=col)
    return value


def _sorted_labels(values) -> list:
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(path, label_column: str | None = "class", delimiter: str = ",", unit: str | None = None,
             class_names=None, require_labels: bool = True) -> LabeledSpectra:
    """Read labelled spectra from CSV.

    Parameters
    ----------
    path : str or Path
    label_column : str, optional
        Header name of the class column. When absent from the file and
        ``require_labels`` is False, the result is unlabelled.
    delimiter : str
    unit : {"cm-1", "nm", "index"}, optional
        Defaults to "index" for a non-numeric header, otherwise "cm-1" for a
        decreasing axis and "nm" for an increasing one.
    class_names : sequence of str, optional
        Fixes the class order (e.g. from a trained model); labels outside it
        raise UnknownLabel. By default classes are sorted, numerically when
        every label parses as a number.

    Raises
    ------
    ParseError, NonFinite, UnknownLabel
        With row/column locations counted from 1, header being row 1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        label_idx = header.index(label_column) if label_column in header else None
        if label_idx is None and require_labels:
            raise ParseError(f"label column {label_column!r} not found in header", row=1)
        spectral = [i for i in range(len(header)) if i != label_idx]
        if not spectral:
            raise ParseError("no spectral columns", row=1)

        rows, raw = [], []
        for r, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(record)}", row=r)
            rows.append([_parse_float(record[i], r, i + 1) for i in spectral])
            if label_idx is not None:
                raw.append(record[label_idx].strip())

    if class_names is not None:
        names = list(class_names)
        unknown = [lab for lab in raw if lab not in names]
        if unknown:
            raise UnknownLabel(unknown[0], names)
    else:
        names = _sorted_labels(set(raw))
    index = {name: g for g, name in enumerate(names)}
    labels = [index[lab] for lab in raw]

    try:
        axis = np.array([float(header[i]) for i in spectral])
        numeric = bool(np.all(np.isfinite(axis)))
    except ValueError:
        numeric = False
    if not numeric:
        axis = np.arange(len(spectral), dtype=float)
    if unit is None:
        unit = "index" if not numeric else ("cm-1" if len(axis) > 1 and axis[1] < axis[0] else "nm")
    X = np.array(rows, dtype=float).reshape(len(rows), len(spectral))
    return LabeledSpectra(
        X=X,
        labels=np.array(labels, dtype=np.int64) if label_idx is not None else None,
        wavelengths=axis,
        unit=unit,
        class_names=names,
    )


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def format_wavelength(w: float) -> str:
    w = float(w)
    return str(int(w)) if w.is_integer() else repr(w)


def save_csv(spectra: LabeledSpectra, path, label_column: str = "class", delimiter: str = ",") -> None:
    """Write spectra in the layout :func:`load_csv` reads, losslessly."""
    path = Path(path)
    header = [format_wavelength(w) for w in spectra.wavelengths]
    with_labels = spectra.labels is not None
    if with_labels:
        header.append(label_column)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(header)
        for n in range(spectra.n_samples):
            row = [format_float(v) for v in spectra.X[n]]
            if with_labels:
                row.append(spectra.class_names[spectra.labels[n]])
            writer.writerow(row)
