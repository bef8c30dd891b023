"""Compressed detection-head branch sizing.

Each cluster of the vocabulary gets its own head branch: a copy of the
baseline head template with every scalable channel count multiplied by the
branch's compression factor (classes served by the branch / total classes)
and rounded up. Prediction layers keep the one-stage convention
``anchors * (classes + box_fields)`` output channels instead of scaling.

Parameter and MAC accounting is exact and layer-local: weights plus bias
for parameters, weight multiplies times spatial positions for MACs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .clustering import ClusterAssignment
from .errors import SchemaError


@dataclass(frozen=True)
class LayerSpec:
    """One convolution of the head: kernel size, channel widths, and the
    summed H*W over every pyramid level it runs on.

    scale_in is False for layers fed by the backbone at a declared width;
    prediction layers never scale their output (it is recomputed from the
    class count).
    """

    kernel: int
    in_channels: int
    out_channels: int
    spatial_elements: int
    scale_in: bool = True
    scale_out: bool = True
    is_prediction: bool = False

    def __post_init__(self):
        if self.kernel < 1:
            raise ValueError(f"kernel must be >= 1, got {self.kernel}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.is_prediction and self.scale_out:
            raise ValueError("prediction layers must have scale_out=False")

    @property
    def params(self) -> int:
        return self.kernel**2 * self.in_channels * self.out_channels + self.out_channels

    @property
    def macs(self) -> int:
        return self.kernel**2 * self.in_channels * self.out_channels * self.spatial_elements


@dataclass(frozen=True)
class HeadTemplate:
    """Baseline head architecture plus the cost metadata of the rest of the
    model (backbone, branch controller) needed to assemble a full plan."""

    name: str
    layers: tuple[LayerSpec, ...]
    anchors_per_cell: int
    box_fields: int  # 5 for YOLO-style (4 box + objectness), 4 otherwise
    levels: tuple[tuple[int, int], ...]
    native_image_size: int = 416
    backbone_params: int = 0
    backbone_macs: int = 0
    controller_params: int = 0
    controller_macs: int = 0

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if i > 0 and layer.scale_in:
                prev = self.layers[i - 1]
                if layer.in_channels != prev.out_channels:
                    raise ValueError(
                        f"layer {i}: input {layer.in_channels} does not chain from "
                        f"previous output {prev.out_channels}"
                    )

    @property
    def native_num_classes(self) -> int:
        """Class count the template was sized for, read off a prediction layer."""
        for layer in self.layers:
            if layer.is_prediction:
                return layer.out_channels // self.anchors_per_cell - self.box_fields
        raise ValueError(f"template {self.name!r} has no prediction layer")

    @property
    def params(self) -> int:
        return count_params(self.layers)

    @property
    def macs(self) -> int:
        return count_macs(self.layers)


@dataclass(frozen=True)
class BranchPlan:
    """A compressed head branch with its exact cost accounting."""

    branch_id: int
    classes: frozenset[int]
    factor: float
    layers: tuple[LayerSpec, ...]
    params: int
    macs: int


def compression_factor(branch_classes: int, total_classes: int) -> float:
    """Classes served by the branch divided by the total class count."""
    if branch_classes <= 0 or total_classes <= 0:
        raise ValueError("class counts must be positive")
    if branch_classes > total_classes:
        raise ValueError(
            f"branch serves {branch_classes} classes but only {total_classes} exist"
        )
    return branch_classes / total_classes


def _scaled(factor: float, channels: int) -> int:
    # ceil with a tiny slack so binary-float factors like 12/30 do not
    # bump an exact product (0.4 * 10) to the next integer; minimum 1.
    return max(1, math.ceil(factor * channels - 1e-9))


def compress_template(
    template: HeadTemplate,
    factor: float,
    num_classes: int,
    branch_id: int = 0,
    classes: frozenset[int] = frozenset(),
) -> BranchPlan:
    """Shrink every scalable channel width of the template by ``factor``.

    Layer count is preserved; chained layers keep a consistent channel
    chain (each input matches its predecessor's compressed output) and
    prediction layers get anchors * (num_classes + box_fields) outputs.
    """
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"compression factor must be in (0, 1], got {factor}")
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")

    compressed: list[LayerSpec] = []
    for i, layer in enumerate(template.layers):
        if not layer.scale_in:
            cin = layer.in_channels
        elif i > 0 and layer.in_channels == template.layers[i - 1].out_channels:
            cin = compressed[i - 1].out_channels
        else:
            cin = _scaled(factor, layer.in_channels)
        if layer.is_prediction:
            cout = template.anchors_per_cell * (num_classes + template.box_fields)
        elif layer.scale_out:
            cout = _scaled(factor, layer.out_channels)
        else:
            cout = layer.out_channels
        compressed.append(replace(layer, in_channels=cin, out_channels=cout))

    layers = tuple(compressed)
    return BranchPlan(
        branch_id=branch_id,
        classes=classes,
        factor=factor,
        layers=layers,
        params=count_params(layers),
        macs=count_macs(layers),
    )


def count_params(layers) -> int:
    """Sum of kernel^2 * in * out weights plus out biases over the layers."""
    return sum(l.params for l in layers)


def count_macs(layers) -> int:
    """Sum of kernel^2 * in * out * spatial multiply-accumulates."""
    return sum(l.macs for l in layers)


def plan_branches(assignment: ClusterAssignment, template: HeadTemplate) -> list[BranchPlan]:
    """One compressed branch per cluster, factor = served / total classes."""
    total = len(assignment.categories)
    served = assignment.served_classes
    return [
        compress_template(
            template,
            factor=compression_factor(len(served[g]), total),
            num_classes=len(served[g]),
            branch_id=g,
            classes=served[g],
        )
        for g in sorted(served)
    ]


def scale_to_image_size(template: HeadTemplate, image_size: int) -> HeadTemplate:
    """Rescale spatial work (and backbone/controller MACs) to a new input
    resolution; convolution work grows with the squared size ratio."""
    if image_size < 1:
        raise ValueError(f"image size must be >= 1, got {image_size}")
    if image_size == template.native_image_size:
        return template
    ratio = (image_size / template.native_image_size) ** 2
    layers = tuple(
        replace(l, spatial_elements=max(1, round(l.spatial_elements * ratio)))
        for l in template.layers
    )
    levels = tuple(
        (max(1, round(h * image_size / template.native_image_size)),
         max(1, round(w * image_size / template.native_image_size)))
        for h, w in template.levels
    )
    return replace(
        template,
        layers=layers,
        levels=levels,
        native_image_size=image_size,
        backbone_macs=round(template.backbone_macs * ratio),
        controller_macs=round(template.controller_macs * ratio),
    )


def _layer_from_json(doc: dict, where: str) -> LayerSpec:
    try:
        return LayerSpec(
            kernel=int(doc["kernel"]),
            in_channels=int(doc["in_channels"]),
            out_channels=int(doc["out_channels"]),
            spatial_elements=int(doc["spatial_elements"]),
            scale_in=bool(doc.get("scale_in", True)),
            scale_out=bool(doc.get("scale_out", True)),
            is_prediction=bool(doc.get("is_prediction", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad layer spec ({exc})") from exc


def template_from_dict(doc: dict, where: str = "template") -> HeadTemplate:
    try:
        return HeadTemplate(
            name=str(doc["name"]),
            layers=tuple(
                _layer_from_json(l, f"{where}.layers[{i}]")
                for i, l in enumerate(doc["layers"])
            ),
            anchors_per_cell=int(doc["anchors_per_cell"]),
            box_fields=int(doc["box_fields"]),
            levels=tuple((int(h), int(w)) for h, w in doc["levels"]),
            native_image_size=int(doc.get("native_image_size", 416)),
            backbone_params=int(doc.get("backbone_params", 0)),
            backbone_macs=int(doc.get("backbone_macs", 0)),
            controller_params=int(doc.get("controller_params", 0)),
            controller_macs=int(doc.get("controller_macs", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad head template ({exc})") from exc


def load_template(path: str | Path) -> HeadTemplate:
    with open(path, "r", encoding="utf-8") as fh:
        return template_from_dict(json.load(fh), where=str(path))


def packaged_template(name: str) -> HeadTemplate:
    """Load one of the shipped templates: 'yolo_head' or 'retinanet_head'."""
    ref = resources.files("ctxbranch.data").joinpath(f"{name}.json")
    return template_from_dict(json.loads(ref.read_text(encoding="utf-8")), where=name)
