from .phantom import PhantomSpec, generate_phantom
from .preprocess import (
    AugmentParams,
    apply_augment,
    augment,
    center_crop_resize,
    rescale_intensity,
)
from .records import DEFAULT_LABELSET, Provenance, SampleRecord
from .shards import load_records, read_manifest, read_shards, write_shards

__all__ = [
    "AugmentParams",
    "DEFAULT_LABELSET",
    "PhantomSpec",
    "Provenance",
    "SampleRecord",
    "apply_augment",
    "augment",
    "center_crop_resize",
    "generate_phantom",
    "load_records",
    "read_manifest",
    "read_shards",
    "rescale_intensity",
    "write_shards",
]
