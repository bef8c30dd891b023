"""Load COCO-style annotation files into an immutable in-memory dataset.

Only the annotation subset needed for co-occurrence statistics is read:
``categories[{id,name}]``, ``images[{id}]`` and
``annotations[{image_id,category_id,bbox}]``. Segmentation masks, crowd
flags and pixel data are ignored; the toolkit never touches image content.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SchemaError

DATASET_CACHE_FORMAT = "ctxbranch-dataset-v1"


@dataclass(frozen=True)
class Instance:
    """One annotated object: a category id and a pixel-space [x, y, w, h] box."""

    category_id: int
    bbox: tuple[float, float, float, float]


@dataclass(frozen=True)
class ImageRecord:
    image_id: int
    instances: tuple[Instance, ...] = ()


@dataclass(frozen=True)
class Dataset:
    """Normalized annotation corpus.

    ``categories`` is ordered by category id and index-addressable; every
    instance's category id appears in it. Duplicate (image, category)
    instances are kept (instance counts drive dominant-context voting) and
    collapse to a single presence bit downstream.
    """

    categories: tuple[tuple[int, str], ...]
    images: tuple[ImageRecord, ...]
    _index_of: dict[int, int] = field(
        init=False, repr=False, compare=False, hash=False, default_factory=dict
    )

    def __post_init__(self):
        ids = [cid for cid, _ in self.categories]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"duplicate category ids: {ids}")
        if sorted(ids) != ids:
            raise SchemaError("categories must be sorted by id")
        object.__setattr__(self, "_index_of", {cid: i for i, cid in enumerate(ids)})
        for image in self.images:
            for inst in image.instances:
                if inst.category_id not in self._index_of:
                    raise SchemaError(
                        f"image {image.image_id}: unknown category_id {inst.category_id}"
                    )
                w, h = inst.bbox[2], inst.bbox[3]
                if not (w > 0 and h > 0):
                    raise SchemaError(
                        f"image {image.image_id}: non-positive bbox extent {inst.bbox}"
                    )

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def category_names(self) -> list[str]:
        return [name for _, name in self.categories]

    def category_index(self, category_id: int) -> int:
        """Position of a category id in the ordered category list."""
        return self._index_of[category_id]

    def index_by_name(self) -> dict[str, int]:
        return {name: i for i, (_, name) in enumerate(self.categories)}


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise SchemaError(f"{where}: missing required key {key!r}")
    return mapping[key]


def dataset_from_coco(doc: dict) -> Dataset:
    """Build a Dataset from an already-parsed COCO annotation dict."""
    raw_categories = _require(doc, "categories", "annotation file")
    raw_images = _require(doc, "images", "annotation file")
    raw_annotations = _require(doc, "annotations", "annotation file")

    categories = []
    for k, cat in enumerate(raw_categories):
        categories.append(
            (int(_require(cat, "id", f"categories[{k}]")),
             str(_require(cat, "name", f"categories[{k}]")))
        )
    categories.sort(key=lambda c: c[0])
    known_ids = {cid for cid, _ in categories}

    by_image: dict[int, list[Instance]] = {}
    image_ids = []
    for k, img in enumerate(raw_images):
        image_id = int(_require(img, "id", f"images[{k}]"))
        if image_id in by_image:
            raise SchemaError(f"images[{k}]: duplicate image id {image_id}")
        by_image[image_id] = []
        image_ids.append(image_id)

    for k, ann in enumerate(raw_annotations):
        where = f"annotations[{k}]"
        image_id = int(_require(ann, "image_id", where))
        category_id = int(_require(ann, "category_id", where))
        bbox = _require(ann, "bbox", where)
        if image_id not in by_image:
            raise SchemaError(f"{where}: image_id {image_id} not in `images`")
        if category_id not in known_ids:
            raise SchemaError(f"{where}: unknown category_id {category_id}")
        if len(bbox) != 4:
            raise SchemaError(f"{where}: bbox must have 4 entries, got {bbox}")
        x, y, w, h = (float(v) for v in bbox)
        if not (w > 0 and h > 0):
            raise SchemaError(f"{where}: non-positive bbox extent {bbox}")
        by_image[image_id].append(Instance(category_id, (x, y, w, h)))

    images = tuple(
        ImageRecord(image_id, tuple(by_image[image_id])) for image_id in image_ids
    )
    return Dataset(categories=tuple(categories), images=images)


def load_annotations(path: str | Path) -> Dataset:
    """Parse a COCO-style annotation JSON file.

    Raises OSError if the file cannot be read and SchemaError (naming the
    offending record) if required keys are missing, a category reference is
    unknown, or a bbox extent is non-positive.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be a JSON object")
    return dataset_from_coco(doc)


def dataset_to_coco(dataset: Dataset) -> dict:
    """Serialize back to the COCO annotation schema subset.

    Round-trip guarantee: ``dataset_from_coco(dataset_to_coco(d)) == d``.
    """
    annotations = []
    for image in dataset.images:
        for inst in image.instances:
            annotations.append(
                {
                    "image_id": image.image_id,
                    "category_id": inst.category_id,
                    "bbox": list(inst.bbox),
                }
            )
    return {
        "categories": [{"id": cid, "name": name} for cid, name in dataset.categories],
        "images": [{"id": image.image_id} for image in dataset.images],
        "annotations": annotations,
    }


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the toolkit's dataset cache (versioned JSON snapshot)."""
    doc = {"format": DATASET_CACHE_FORMAT, **dataset_to_coco(dataset)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_dataset(path: str | Path) -> Dataset:
    """Read a cache written by save_dataset; also accepts raw COCO files."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    fmt = doc.get("format")
    if fmt is not None and fmt != DATASET_CACHE_FORMAT:
        raise SchemaError(f"{path}: unsupported dataset cache format {fmt!r}")
    return dataset_from_coco(doc)
