"""Model artifacts: a single schema-versioned JSON document.

Floats are written with ``repr``, which round-trips every double exactly,
so a loaded model predicts bit-for-bit like the one that was saved.
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionMismatch, SchemaError, VersionMismatch
from .families import CovarianceFamily, GaussianClassParams, params_from_covariances

SCHEMA = "stepredda-model"
SCHEMA_VERSION = 1


def kept_digest(kept) -> str:
    kept = np.asarray(kept, dtype=bool)
    h = hashlib.sha256()
    h.update(str(kept.size).encode())
    h.update(np.packbits(kept).tobytes())
    return "sha256:" + h.hexdigest()


def versions() -> dict:
    import scipy

    return {
        "stepredda": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


@dataclass
class ModelArtifact:
    params: GaussianClassParams
    selected: list
    wavelengths: list
    unit: str
    class_names: list
    gamma: float
    n_star: int
    n_channels: int
    trimmed_loglik: float = float("nan")
    kept_digest: str = ""
    tool_version: str = __version__
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.selected = [int(j) for j in self.selected]
        self.wavelengths = [float(w) for w in self.wavelengths]
        if len(self.selected) != self.params.dim:
            raise SchemaError(
                f"{len(self.selected)} selected variables but parameters have dimension {self.params.dim}"
            )
        if len(self.wavelengths) != len(self.selected):
            raise SchemaError("one wavelength per selected variable is required")
        if len(self.class_names) != self.params.n_classes:
            raise SchemaError("one class name per class is required")

    @property
    def family(self) -> CovarianceFamily:
        return self.params.family

    def project(self, X) -> np.ndarray:
        """Reduce input to the model's variables.

        Accepts either exactly the selected columns, or a full-width matrix
        with the training channel count.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        p = len(self.selected)
        if X.shape[1] == self.n_channels:
            return X[:, self.selected]
        if X.shape[1] == p:
            return X
        raise DimensionMismatch(
            f"model expects {p} selected columns or {self.n_channels} full-spectrum columns, got {X.shape[1]}"
        )

    def to_dict(self) -> dict:
        p = self.params
        return {
            "schema": SCHEMA,
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "family": p.family.value,
            "gamma": float(self.gamma),
            "n_star": int(self.n_star),
            "n_channels": int(self.n_channels),
            "class_names": list(self.class_names),
            "selected": {
                "columns": self.selected,
                "wavelengths": self.wavelengths,
                "unit": self.unit,
            },
            "params": {
                "tau": p.tau.tolist(),
                "mu": p.mu.tolist(),
                "covariances": p.covariances.tolist(),
            },
            "trimmed_loglik": float(self.trimmed_loglik),
            "kept_digest": self.kept_digest,
            "manifest": self.manifest,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelArtifact":
        if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
            raise SchemaError("not a stepredda model document")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise VersionMismatch(
                f"model schema version {doc.get('schema_version')!r}, this tool reads {SCHEMA_VERSION}"
            )
        try:
            par = doc["params"]
            params = params_from_covariances(
                doc["family"], np.array(par["tau"], dtype=float), np.array(par["mu"], dtype=float),
                np.array(par["covariances"], dtype=float),
            )
            sel = doc["selected"]
            return cls(
                params=params,
                selected=sel["columns"],
                wavelengths=sel["wavelengths"],
                unit=sel["unit"],
                class_names=list(doc["class_names"]),
                gamma=float(doc["gamma"]),
                n_star=int(doc["n_star"]),
                n_channels=int(doc["n_channels"]),
                trimmed_loglik=float(doc["trimmed_loglik"]),
                kept_digest=doc["kept_digest"],
                tool_version=doc["tool_version"],
                manifest=doc.get("manifest", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(f"malformed model document: {exc}") from None


def dumps_model(artifact: ModelArtifact) -> str:
    return json.dumps(artifact.to_dict(), indent=1, sort_keys=True, allow_nan=True) + "\n"


def save_model(artifact: ModelArtifact, path) -> None:
    Path(path).write_text(dumps_model(artifact))


def load_model(path) -> ModelArtifact:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from None
    return ModelArtifact.from_dict(doc)


def artifact_from_fit(fit, selected, spectra, manifest=None) -> ModelArtifact:
    """Bundle a TrimmedFit trained on ``spectra[:, selected]``."""
    selected = [int(j) for j in selected]
    return ModelArtifact(
        params=fit.params,
        selected=selected,
        wavelengths=[float(spectra.wavelengths[j]) for j in selected],
        unit=spectra.unit,
        class_names=list(spectra.class_names),
        gamma=fit.gamma,
        n_star=fit.n_star,
        n_channels=spectra.n_channels,
        trimmed_loglik=fit.trimmed_loglik,
        kept_digest=kept_digest(fit.kept),
        manifest=manifest or {},
    )
