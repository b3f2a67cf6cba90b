"""Versioned model checkpoints: config snapshot + named parameter arrays.

Stored as an .npz container with one entry per parameter (row-major float64,
so reload -> forward is bit-identical) plus a JSON metadata entry. Unknown
fields anywhere in the container are rejected rather than ignored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .nets import ModelConfig, NeuralModel, build_model

FORMAT_VERSION = 1
_META_KEY = "__meta__"
_PARAM_PREFIX = "param/"
_META_FIELDS = {"version", "family", "config", "epoch", "selection_score"}


@dataclass
class Checkpoint:
    """A frozen parameter snapshot with its config, epoch, and selection score."""

    config: ModelConfig
    arrays: dict[str, np.ndarray]
    epoch: int
    selection_score: float

    @property
    def family(self) -> str:
        return self.config.family

    def save(self, path: str) -> None:
        meta = {
            "version": FORMAT_VERSION,
            "family": self.config.family,
            "config": self.config.to_dict(),
            "epoch": int(self.epoch),
            "selection_score": float(self.selection_score),
        }
        payload = {_PARAM_PREFIX + name: arr for name, arr in self.arrays.items()}
        payload[_META_KEY] = np.array(json.dumps(meta))
        np.savez(path, **payload)

    @classmethod
    def from_model(cls, model: NeuralModel, epoch: int, selection_score: float) -> "Checkpoint":
        return cls(
            config=model.config,
            arrays=model.parameter_arrays(),
            epoch=epoch,
            selection_score=selection_score,
        )

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        with np.load(path, allow_pickle=False) as data:
            keys = set(data.files)
            if _META_KEY not in keys:
                raise ValidationError("checkpoint has no metadata entry")
            unknown = [k for k in keys if k != _META_KEY and not k.startswith(_PARAM_PREFIX)]
            if unknown:
                raise ValidationError(f"checkpoint contains unknown entries: {sorted(unknown)}")
            meta = json.loads(str(data[_META_KEY]))
            extra = set(meta) - _META_FIELDS
            if extra:
                raise ValidationError(f"checkpoint metadata has unknown fields: {sorted(extra)}")
            missing = _META_FIELDS - set(meta)
            if missing:
                raise ValidationError(f"checkpoint metadata is missing fields: {sorted(missing)}")
            if meta["version"] != FORMAT_VERSION:
                raise ValidationError(
                    f"unsupported checkpoint version {meta['version']} (expected {FORMAT_VERSION})"
                )
            config = ModelConfig.from_dict(meta["config"])
            if config.family != meta["family"]:
                raise ValidationError("checkpoint family does not match its config snapshot")
            arrays = {
                k[len(_PARAM_PREFIX) :]: np.array(data[k], dtype=np.float64)
                for k in keys
                if k.startswith(_PARAM_PREFIX)
            }
        return cls(config=config, arrays=arrays, epoch=int(meta["epoch"]),
                   selection_score=float(meta["selection_score"]))

    def restore(self) -> NeuralModel:
        """Rebuild the model and load the stored parameters into it."""
        model = build_model(self.config)
        model.set_parameters(self.arrays)
        return model
