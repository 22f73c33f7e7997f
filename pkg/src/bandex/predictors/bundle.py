"""Model bundle files (.bxm): versioned JSON with a content checksum."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import LoadError, PreconditionError
from ..lpc import AnalysisConfig
from .predictor import Predictor

FORMAT_VERSION = 1


@dataclass
class ModelBundle:
    high: Predictor
    low: Predictor
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    residual_vq: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def payload(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "analysis": dataclasses.asdict(self.analysis),
            "high": self.high.to_dict(),
            "low": self.low.to_dict(),
            "residual_vq": None if self.residual_vq is None else np.asarray(self.residual_vq).tolist(),
            "meta": self.meta,
        }


def _digest(payload: dict) -> str:
    # repr-based float output is shortest round-trip, so parse(dump(x)) == x
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_model(bundle: ModelBundle, path) -> None:
    payload = bundle.payload()
    try:
        payload["checksum"] = _digest(payload)
    except ValueError as exc:
        raise PreconditionError(f"model contains non-finite values: {exc}") from exc
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")


def load_model(path) -> ModelBundle:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read model {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise LoadError(f"{path}: not a model bundle")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    checksum = payload.pop("checksum", None)
    if checksum != _digest(payload):
        raise LoadError(f"{path}: checksum mismatch")
    try:
        vq = payload["residual_vq"]
        return ModelBundle(
            Predictor.from_dict(payload["high"]),
            Predictor.from_dict(payload["low"]),
            AnalysisConfig(**payload["analysis"]),
            None if vq is None else np.asarray(vq, dtype=float),
            payload.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LoadError(f"{path}: malformed bundle: {exc}") from exc
