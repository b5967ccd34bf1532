"""Versioned JSON model files with exact float64 array round-trips.

Arrays are stored as base64-packed little-endian float64 bytes, so a saved
baseline reloads to bit-identical scores.  The file records the format
version, the PRNG identity, and caller-supplied provenance.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gem import RNG_ALGORITHM, GemBaseline
from .pca import PcaBaseline, ProjectedGemBaseline

FORMAT_VERSION = 1

Model = GemBaseline | PcaBaseline | ProjectedGemBaseline


def _encode_array(arr: np.ndarray) -> dict:
    packed = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "dtype": "<f8",
        "data": base64.b64encode(packed.tobytes()).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=obj["dtype"]).reshape(obj["shape"])
    return arr.astype(np.float64, copy=False)  # read-only view is fine


def _gem_payload(b: GemBaseline) -> dict:
    return {
        "s1": _encode_array(b.s1),
        "k": b.k,
        "sorted_stats": _encode_array(b.sorted_stats),
        "seed": b.seed,
        "rng_algorithm": b.rng_algorithm,
    }


def _gem_from_payload(payload: dict) -> GemBaseline:
    return GemBaseline(
        s1=_decode_array(payload["s1"]),
        k=int(payload["k"]),
        sorted_stats=_decode_array(payload["sorted_stats"]),
        seed=payload.get("seed"),
        rng_algorithm=payload.get("rng_algorithm", RNG_ALGORITHM),
    )


def _pca_payload(b: PcaBaseline) -> dict:
    return {
        "mean": _encode_array(b.mean),
        "basis": _encode_array(b.basis),
        "eigenvalues": _encode_array(b.eigenvalues),
        "r": b.r,
        "gamma_achieved": b.gamma_achieved,
        "sorted_stats": _encode_array(b.sorted_stats),
    }


def _pca_from_payload(payload: dict) -> PcaBaseline:
    return PcaBaseline(
        mean=_decode_array(payload["mean"]),
        basis=_decode_array(payload["basis"]),
        eigenvalues=_decode_array(payload["eigenvalues"]),
        r=int(payload["r"]),
        gamma_achieved=float(payload["gamma_achieved"]),
        sorted_stats=_decode_array(payload["sorted_stats"]),
    )


def model_kind(model: Model) -> str:
    if isinstance(model, GemBaseline):
        return "gem"
    if isinstance(model, PcaBaseline):
        return "pca"
    if isinstance(model, ProjectedGemBaseline):
        return "pca+gem"
    raise TypeError(f"unsupported model type {type(model).__name__}")


@dataclass(frozen=True)
class ModelFile:
    format_version: int
    kind: str
    model: Model
    provenance: dict


def save_model(path, model: Model, provenance: dict | None = None) -> None:
    kind = model_kind(model)
    if kind == "gem":
        payload = _gem_payload(model)
    elif kind == "pca":
        payload = _pca_payload(model)
    else:
        payload = {"pca": _pca_payload(model.pca), "gem": _gem_payload(model.gem)}
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "rng_algorithm": RNG_ALGORITHM,
        "provenance": provenance or {},
        "payload": payload,
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_model(path) -> ModelFile:
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model file version {version!r}")
    kind = doc["kind"]
    payload = doc["payload"]
    if kind == "gem":
        model: Model = _gem_from_payload(payload)
    elif kind == "pca":
        model = _pca_from_payload(payload)
    elif kind == "pca+gem":
        model = ProjectedGemBaseline(
            pca=_pca_from_payload(payload["pca"]), gem=_gem_from_payload(payload["gem"])
        )
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return ModelFile(
        format_version=version,
        kind=kind,
        model=model,
        provenance=doc.get("provenance", {}),
    )
