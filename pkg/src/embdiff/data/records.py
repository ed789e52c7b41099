"""Sample records: one image plus multi-label vector, optional masks, provenance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError

# Labelset mirrors the seven findings used throughout the experiment harness;
# keeping cardinality at 7 makes the per-label budget arithmetic exact.
DEFAULT_LABELSET = (
    "atelectasis",
    "cardiomegaly",
    "consolidation",
    "edema",
    "pleural_effusion",
    "pneumonia",
    "pneumothorax",
)


@dataclass(frozen=True)
class Provenance:
    """Where a record came from.

    kind is "real" or "synthetic"; synthetic records carry the strategy name,
    at least one source id, and the interpolation fraction when applicable.
    """

    kind: str = "real"
    strategy: str | None = None
    source_ids: tuple[str, ...] = ()
    r: float | None = None

    def __post_init__(self):
        if self.kind not in ("real", "synthetic"):
            raise ContractError(f"unknown provenance kind: {self.kind!r}")
        if self.kind == "synthetic" and len(self.source_ids) < 1:
            raise ContractError("synthetic records need at least one source id")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "synthetic":
            d["strategy"] = self.strategy
            d["source_ids"] = list(self.source_ids)
            if self.r is not None:
                d["r"] = self.r
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(
            kind=d["kind"],
            strategy=d.get("strategy"),
            source_ids=tuple(d.get("source_ids", ())),
            r=d.get("r"),
        )


@dataclass
class SampleRecord:
    """One image with its multi-label vector and optional ground-truth masks."""

    id: str
    image: np.ndarray  # HxWx3 uint8
    labels: np.ndarray  # (|labelset|,) 0/1 int8
    masks: dict[str, np.ndarray] = field(default_factory=dict)  # name -> HxW bool
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ContractError(f"image must be HxWx3, got {self.image.shape}")
        if self.image.dtype != np.uint8:
            raise ContractError(f"image must be uint8, got {self.image.dtype}")
        for name, mask in self.masks.items():
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != self.image.shape[:2]:
                raise ContractError(
                    f"mask {name!r} shape {mask.shape} != image {self.image.shape[:2]}"
                )
            self.masks[name] = mask

    @property
    def side(self) -> int:
        return self.image.shape[0]
