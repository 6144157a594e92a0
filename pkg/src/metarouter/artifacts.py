"""Persistence of trained routing artifacts.

A bundle is a versioned JSON container holding the fitted shift model, the
quality-gain model, and the projection/normalization needed to reproduce the
training-time query space.  Floats survive the round trip bit-exactly
(repr-based JSON serialization).
"""

from __future__ import annotations

import json

from .cate import CateModel
from .regress import Projection, model_from_dict
from .router import NormalizationMethod, QualityGainModel

__all__ = ["ArtifactError", "SCHEMA_VERSION", "build_bundle", "save_bundle",
           "load_bundle", "RouterBundle"]

SCHEMA_VERSION = 1


class ArtifactError(ValueError):
    """Unreadable, mismatched or unsupported artifact."""


class RouterBundle:
    """In-memory form of a persisted artifact."""

    def __init__(self, quality_model: QualityGainModel, cate_model: CateModel | None,
                 projection: Projection | None, config_hash: str):
        self.quality_model = quality_model
        self.cate_model = cate_model
        self.projection = projection
        self.config_hash = config_hash

    @property
    def expected_input_dim(self) -> int:
        """Raw query dimension the bundle accepts (before any projection)."""
        if self.projection is not None:
            return self.projection.input_dim
        return self.quality_model.predictor.dim

    def project_queries(self, X):
        from .regress import project

        return X if self.projection is None else project(self.projection, X)


def build_bundle(quality_model: QualityGainModel, cate_model: CateModel | None,
                 projection: Projection | None, config_hash: str) -> dict:
    norm = quality_model.normalization
    cate_dict = None
    if cate_model is not None:
        cate_dict = {
            "learner_kind": cate_model.learner_kind,
            "predictor": cate_model.predictor.to_dict(),
            "nuisance_metadata": cate_model.nuisance_metadata,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash,
        "projection": None if projection is None else projection.to_dict(),
        "normalization": None if norm is None else norm.to_dict(),
        "quality_model": {
            "provenance": quality_model.provenance,
            "predictor": quality_model.predictor.to_dict(),
        },
        "cate_model": cate_dict,
    }


def save_bundle(path, bundle: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, sort_keys=True)
        fh.write("\n")


def load_bundle(path) -> RouterBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ArtifactError(
            f"artifact schema version {version!r} is not supported (expected {SCHEMA_VERSION})"
        )
    norm = raw.get("normalization")
    quality = QualityGainModel(
        predictor=model_from_dict(raw["quality_model"]["predictor"]),
        provenance=raw["quality_model"]["provenance"],
        normalization=None if norm is None else NormalizationMethod(**norm),
    )
    cate = None
    if raw.get("cate_model") is not None:
        cate = CateModel(
            learner_kind=raw["cate_model"]["learner_kind"],
            predictor=model_from_dict(raw["cate_model"]["predictor"]),
            nuisance_metadata=raw["cate_model"].get("nuisance_metadata", {}),
        )
    proj = raw.get("projection")
    return RouterBundle(
        quality_model=quality,
        cate_model=cate,
        projection=None if proj is None else Projection.from_dict(proj),
        config_hash=raw.get("config_hash", ""),
    )
