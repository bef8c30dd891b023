"""Adaptive-routing runtime simulation.

Replays the runtime head selection without executing any network: per image
the dominant spatial context and per-context instance fractions are derived
from the annotations, a simulated branch controller turns the fractions
into confidence scores (verbatim for the oracle controller, Gaussian-
perturbed for the noisy one), and a routing policy picks the branch set.

The accuracy proxy is instance coverage: the fraction of ground-truth
instances whose category is served by some executed branch. It upper-bounds
the recall attainable under the routing decision and is NOT an average
precision; every emitted report repeats this caveat.

Costs are charged per inference: dynamic MACs/parameters are the backbone
plus controller plus executed branches, and latency/energy follow an affine
model in GMACs calibrated from reference measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .branch_design import BranchPlan, HeadTemplate, LayerSpec, plan_branches
from .clustering import ClusterAssignment
from .errors import ConsistencyError, SchemaError
from .ingest import Dataset, ImageRecord

MODEL_PLAN_FORMAT = "ctxbranch-plan-v1"
COST_MODEL_FORMAT = "ctxbranch-cost-model-v1"

ACCURACY_PROXY_NOTE = (
    "accuracy is an instance-coverage proxy (upper bound on attainable "
    "recall under routing), not average precision; costs are affine in MACs "
    "and ignore memory/cache effects"
)


@dataclass(frozen=True)
class ModelPlan:
    """Backbone + branch controller + the pool of compressed branches."""

    backbone_params: int
    backbone_macs: int
    controller_params: int
    controller_macs: int
    branches: tuple[BranchPlan, ...]

    def __post_init__(self):
        if min(self.backbone_params, self.backbone_macs,
               self.controller_params, self.controller_macs) < 0:
            raise ValueError("cost components must be nonnegative")
        ids = [b.branch_id for b in self.branches]
        if ids != list(range(len(ids))):
            raise ConsistencyError(f"branch ids must be 0..{len(ids) - 1}, got {ids}")

    @property
    def sparam(self) -> int:
        """Static parameter total: everything that must be stored."""
        return (self.backbone_params + self.controller_params
                + sum(b.params for b in self.branches))

    @property
    def total_macs(self) -> int:
        return (self.backbone_macs + self.controller_macs
                + sum(b.macs for b in self.branches))

    def dynamic_params(self, executed: frozenset[int]) -> int:
        return (self.backbone_params + self.controller_params
                + sum(self.branches[b].params for b in executed))

    def dynamic_macs(self, executed: frozenset[int]) -> int:
        return (self.backbone_macs + self.controller_macs
                + sum(self.branches[b].macs for b in executed))


def build_model_plan(assignment: ClusterAssignment, template: HeadTemplate) -> ModelPlan:
    return ModelPlan(
        backbone_params=template.backbone_params,
        backbone_macs=template.backbone_macs,
        controller_params=template.controller_params,
        controller_macs=template.controller_macs,
        branches=tuple(plan_branches(assignment, template)),
    )


@dataclass(frozen=True)
class RoutingPolicy:
    """single: execute the top-scoring branch. multi: execute every branch
    scoring above the threshold, falling back to the top branch if none do."""

    mode: str
    threshold: float = 0.0

    def __post_init__(self):
        if self.mode not in ("single", "multi"):
            raise ValueError(f"mode must be 'single' or 'multi', got {self.mode!r}")
        if self.mode == "multi" and not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")


@dataclass(frozen=True)
class ControllerModel:
    """Simulated branch controller.

    oracle returns the context fractions as scores; noisy adds clamped
    Gaussian noise whose draw is keyed by (seed, image_id) so results do
    not depend on evaluation order.
    """

    kind: str = "oracle"
    noise_sigma: float = 0.0
    seed: int = 0
    target_accuracy: float | None = None

    def __post_init__(self):
        if self.kind not in ("oracle", "noisy"):
            raise ValueError(f"kind must be 'oracle' or 'noisy', got {self.kind!r}")
        if self.kind == "oracle" and self.noise_sigma != 0.0:
            raise ValueError("oracle controller must have noise_sigma = 0")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class ImageSimResult:
    image_id: int
    true_dominant: int
    predicted: int
    scores: tuple[float, ...]
    executed: frozenset[int]
    covered_instances: int
    total_instances: int
    dynamic_params: int
    dynamic_macs: int

    @property
    def coverage(self) -> float:
        # An image with no instances misses nothing.
        return self.covered_instances / self.total_instances if self.total_instances else 1.0


@dataclass(frozen=True)
class Aggregates:
    mean_coverage: float
    controller_accuracy: float
    mean_dynamic_macs: float
    mean_dynamic_params: float
    mean_latency_ms: float
    mean_energy_mJ: float


@dataclass(frozen=True)
class SimulationReport:
    results: tuple[ImageSimResult, ...]
    aggregates: Aggregates
    sparam: int
    policy: RoutingPolicy
    controller: ControllerModel
    note: str = ACCURACY_PROXY_NOTE


@dataclass(frozen=True)
class CostModel:
    """Per-inference latency/energy, affine in GMACs."""

    a_lat: float  # ms per GMAC
    b_lat: float  # ms
    a_en: float   # mJ per GMAC
    b_en: float   # mJ
    r2_latency: float | None = field(default=None, compare=False)
    r2_energy: float | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("a_lat", "b_lat", "a_en", "b_en"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    def latency_ms(self, gmacs: float) -> float:
        return self.a_lat * gmacs + self.b_lat

    def energy_mJ(self, gmacs: float) -> float:
        return self.a_en * gmacs + self.b_en


def most_frequent_cluster(dataset: Dataset, assignment: ClusterAssignment) -> int:
    """Cluster owning the most non-common instances across the whole
    dataset; used as the dominant context of images that carry only common
    (or no) objects. Ties go to the lowest cluster id."""
    counts = np.zeros(assignment.k, dtype=np.int64)
    for image in dataset.images:
        for inst in image.instances:
            g = assignment.assignment.get(dataset.category_index(inst.category_id))
            if g is not None:
                counts[g] += 1
    return int(np.argmax(counts))


def _cluster_counts(image: ImageRecord, assignment: ClusterAssignment,
                    category_index) -> np.ndarray:
    counts = np.zeros(assignment.k, dtype=np.int64)
    for inst in image.instances:
        g = assignment.assignment.get(category_index(inst.category_id))
        if g is not None:  # common categories do not vote
            counts[g] += 1
    return counts


def dominant_context(image: ImageRecord, assignment: ClusterAssignment,
                     category_index, fallback_cluster: int = 0) -> int:
    """Cluster holding the plurality of the image's non-common instances.

    Ties break to the lowest cluster id; images with no non-common
    instances take ``fallback_cluster`` (see most_frequent_cluster).
    """
    counts = _cluster_counts(image, assignment, category_index)
    if counts.sum() == 0:
        return fallback_cluster
    return int(np.argmax(counts))


def context_fractions(image: ImageRecord, assignment: ClusterAssignment,
                      category_index, fallback_cluster: int = 0) -> np.ndarray:
    """Per-cluster share of the image's non-common instances (sums to 1);
    all-common or empty images get the fallback cluster's indicator."""
    counts = _cluster_counts(image, assignment, category_index)
    total = counts.sum()
    if total == 0:
        out = np.zeros(assignment.k)
        out[fallback_cluster] = 1.0
        return out
    return counts / total


def controller_scores(fractions: np.ndarray, model: ControllerModel,
                      image_id: int) -> np.ndarray:
    """Confidence scores in [0, 1] for each spatial context."""
    if model.kind == "oracle" or model.noise_sigma == 0.0:
        return fractions.astype(np.float64).copy()
    rng = np.random.default_rng((model.seed, int(image_id)))
    noise = model.noise_sigma * rng.standard_normal(fractions.shape[0])
    return np.clip(fractions + noise, 0.0, 1.0)


def route(scores: np.ndarray, policy: RoutingPolicy) -> frozenset[int]:
    """Branch ids to execute. single: argmax (ties to lowest id).
    multi: every branch above threshold, argmax if none qualify."""
    if scores.shape[0] < 1:
        raise ValueError("need at least one cluster score")
    if policy.mode == "single":
        return frozenset([int(np.argmax(scores))])
    chosen = np.flatnonzero(scores > policy.threshold)
    if chosen.size == 0:
        return frozenset([int(np.argmax(scores))])
    return frozenset(chosen.tolist())


def coverage(image: ImageRecord, executed: frozenset[int],
             plans: tuple[BranchPlan, ...] | list[BranchPlan],
             category_index) -> tuple[int, int]:
    """(instances whose category is served by an executed branch, total)."""
    if not executed:
        raise ValueError("executed branch set must be non-empty")
    served: set[int] = set()
    for b in executed:
        served |= plans[b].classes
    covered = sum(1 for inst in image.instances
                  if category_index(inst.category_id) in served)
    return covered, len(image.instances)


def _affine_fit(samples) -> tuple[float, float, float]:
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least 2 (gmacs, value) samples")
    x, y = pts[:, 0], pts[:, 1]
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(residuals @ residuals)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-12 else 0.0)
    return float(slope), float(intercept), r2


def calibrate_cost_model(latency_samples, energy_samples) -> CostModel:
    """Least-squares affine fit of latency and energy against GMACs.

    Samples are (gmacs, latency_ms) and (gmacs, energy_mJ) pairs, at least
    two of each. The fit quality is attached as r2_latency / r2_energy.
    """
    a_lat, b_lat, r2_lat = _affine_fit(latency_samples)
    a_en, b_en, r2_en = _affine_fit(energy_samples)
    return CostModel(a_lat=a_lat, b_lat=b_lat, a_en=a_en, b_en=b_en,
                     r2_latency=r2_lat, r2_energy=r2_en)


def _check_consistency(dataset: Dataset, assignment: ClusterAssignment,
                       plan: ModelPlan) -> None:
    if len(plan.branches) != assignment.k:
        raise ConsistencyError(
            f"model plan has {len(plan.branches)} branches but the "
            f"assignment has k={assignment.k} clusters"
        )
    n = dataset.n_categories
    if any(c >= n or c < 0 for c in assignment.categories):
        raise ConsistencyError("assignment references categories outside the dataset")
    served = assignment.served_classes
    for b in plan.branches:
        if b.classes and b.classes != served[b.branch_id]:
            raise ConsistencyError(
                f"branch {b.branch_id} serves {sorted(b.classes)} but the "
                f"assignment expects {sorted(served[b.branch_id])}"
            )


def compute_aggregates(results, cost_model: CostModel) -> Aggregates:
    """Recompute every aggregate from the per-image rows."""
    n = len(results)
    if n == 0:
        raise ValueError("no per-image results to aggregate")
    gmacs = np.array([r.dynamic_macs for r in results], dtype=np.float64) / 1e9
    return Aggregates(
        mean_coverage=float(np.mean([r.coverage for r in results])),
        controller_accuracy=float(np.mean(
            [r.predicted == r.true_dominant for r in results])),
        mean_dynamic_macs=float(np.mean([r.dynamic_macs for r in results])),
        mean_dynamic_params=float(np.mean([r.dynamic_params for r in results])),
        mean_latency_ms=float(np.mean([cost_model.latency_ms(g) for g in gmacs])),
        mean_energy_mJ=float(np.mean([cost_model.energy_mJ(g) for g in gmacs])),
    )


def simulate(dataset: Dataset, assignment: ClusterAssignment, plan: ModelPlan,
             controller: ControllerModel, policy: RoutingPolicy,
             cost_model: CostModel) -> SimulationReport:
    """Run the routing loop over every image and aggregate the outcome.

    Deterministic given the controller seed; per-image noise is keyed by
    (seed, image_id) so concurrency or reordering cannot change results.
    """
    _check_consistency(dataset, assignment, plan)
    fallback = most_frequent_cluster(dataset, assignment)
    index = dataset.category_index

    results = []
    for image in dataset.images:
        fractions = context_fractions(image, assignment, index, fallback)
        scores = controller_scores(fractions, controller, image.image_id)
        executed = route(scores, policy)
        covered, total = coverage(image, executed, plan.branches, index)
        results.append(ImageSimResult(
            image_id=image.image_id,
            true_dominant=dominant_context(image, assignment, index, fallback),
            predicted=int(np.argmax(scores)),
            scores=tuple(float(s) for s in scores),
            executed=executed,
            covered_instances=covered,
            total_instances=total,
            dynamic_params=plan.dynamic_params(executed),
            dynamic_macs=plan.dynamic_macs(executed),
        ))
    results = tuple(results)
    return SimulationReport(
        results=results,
        aggregates=compute_aggregates(results, cost_model),
        sparam=plan.sparam,
        policy=policy,
        controller=controller,
    )


def controller_accuracy(dataset: Dataset, assignment: ClusterAssignment,
                        controller: ControllerModel) -> float:
    """Top-1 accuracy of the simulated controller at predicting the
    dominant context."""
    fallback = most_frequent_cluster(dataset, assignment)
    index = dataset.category_index
    hits = 0
    for image in dataset.images:
        fractions = context_fractions(image, assignment, index, fallback)
        scores = controller_scores(fractions, controller, image.image_id)
        hits += int(np.argmax(scores)) == dominant_context(
            image, assignment, index, fallback)
    return hits / len(dataset.images)


def calibrate_noise_sigma(dataset: Dataset, assignment: ClusterAssignment,
                          target_accuracy: float, seed: int = 0,
                          iterations: int = 60) -> float:
    """Bisection for the noise scale whose measured top-1 accuracy matches
    ``target_accuracy`` (a fraction). Accuracy is nonincreasing in sigma
    because each image's noise draw is frozen and scaled by sigma.
    """
    if not 0.0 < target_accuracy <= 1.0:
        raise ValueError(f"target accuracy must be in (0, 1], got {target_accuracy}")

    def measure(sigma: float) -> float:
        return controller_accuracy(
            dataset, assignment,
            ControllerModel(kind="noisy", noise_sigma=sigma, seed=seed,
                            target_accuracy=target_accuracy))

    if measure(0.0) < target_accuracy:
        raise ValueError("even a noise-free controller misses the target accuracy")
    hi = 0.25
    while measure(hi) >= target_accuracy:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("accuracy never drops below the target; cannot calibrate")
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if measure(mid) >= target_accuracy:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Plan / cost-model / report serialization

def _layer_to_dict(layer: LayerSpec) -> dict:
    return {
        "kernel": layer.kernel,
        "in_channels": layer.in_channels,
        "out_channels": layer.out_channels,
        "spatial_elements": layer.spatial_elements,
        "scale_in": layer.scale_in,
        "scale_out": layer.scale_out,
        "is_prediction": layer.is_prediction,
    }


def write_model_plan(plan: ModelPlan, path: str | Path, dataset: Dataset | None = None,
                     meta: dict | None = None) -> None:
    names = dataset.category_names if dataset is not None else None
    doc = {
        "format": MODEL_PLAN_FORMAT,
        "backbone_params": plan.backbone_params,
        "backbone_macs": plan.backbone_macs,
        "controller_params": plan.controller_params,
        "controller_macs": plan.controller_macs,
        "sparam": plan.sparam,
        "branches": [
            {
                "branch_id": b.branch_id,
                "classes": sorted(b.classes),
                "class_names": sorted(names[c] for c in b.classes) if names else None,
                "factor": b.factor,
                "params": b.params,
                "macs": b.macs,
                "layers": [_layer_to_dict(l) for l in b.layers],
            }
            for b in plan.branches
        ],
    }
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_model_plan(path: str | Path) -> ModelPlan:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_PLAN_FORMAT:
        raise SchemaError(f"{path}: unsupported plan format {doc.get('format')!r}")
    branches = []
    for b in doc["branches"]:
        layers = tuple(
            LayerSpec(
                kernel=l["kernel"],
                in_channels=l["in_channels"],
                out_channels=l["out_channels"],
                spatial_elements=l["spatial_elements"],
                scale_in=l["scale_in"],
                scale_out=l["scale_out"],
                is_prediction=l["is_prediction"],
            )
            for l in b["layers"]
        )
        branches.append(BranchPlan(
            branch_id=int(b["branch_id"]),
            classes=frozenset(b["classes"]),
            factor=float(b["factor"]),
            layers=layers,
            params=int(b["params"]),
            macs=int(b["macs"]),
        ))
    return ModelPlan(
        backbone_params=int(doc["backbone_params"]),
        backbone_macs=int(doc["backbone_macs"]),
        controller_params=int(doc["controller_params"]),
        controller_macs=int(doc["controller_macs"]),
        branches=tuple(branches),
    )


def write_cost_model(model: CostModel, path: str | Path) -> None:
    doc = {
        "format": COST_MODEL_FORMAT,
        "a_lat": model.a_lat, "b_lat": model.b_lat,
        "a_en": model.a_en, "b_en": model.b_en,
        "r2_latency": model.r2_latency, "r2_energy": model.r2_energy,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_cost_model(path: str | Path) -> CostModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != COST_MODEL_FORMAT:
        raise SchemaError(f"{path}: unsupported cost model format {doc.get('format')!r}")
    return CostModel(a_lat=float(doc["a_lat"]), b_lat=float(doc["b_lat"]),
                     a_en=float(doc["a_en"]), b_en=float(doc["b_en"]),
                     r2_latency=doc.get("r2_latency"), r2_energy=doc.get("r2_energy"))


def report_to_dict(report: SimulationReport, per_image: bool = False) -> dict:
    agg = report.aggregates
    doc = {
        "note": report.note,
        "policy": {"mode": report.policy.mode, "threshold": report.policy.threshold},
        "controller": {
            "kind": report.controller.kind,
            "noise_sigma": report.controller.noise_sigma,
            "seed": report.controller.seed,
            "target_accuracy": report.controller.target_accuracy,
        },
        "sparam": report.sparam,
        "aggregates": {
            "mean_coverage": agg.mean_coverage,
            "controller_accuracy": agg.controller_accuracy,
            "mean_dynamic_macs": agg.mean_dynamic_macs,
            "mean_dynamic_params": agg.mean_dynamic_params,
            "mean_latency_ms": agg.mean_latency_ms,
            "mean_energy_mJ": agg.mean_energy_mJ,
        },
        "n_images": len(report.results),
    }
    if per_image:
        doc["per_image"] = [
            {
                "image_id": r.image_id,
                "true_dominant": r.true_dominant,
                "predicted": r.predicted,
                "scores": list(r.scores),
                "executed": sorted(r.executed),
                "covered_instances": r.covered_instances,
                "total_instances": r.total_instances,
                "dynamic_params": r.dynamic_params,
                "dynamic_macs": r.dynamic_macs,
            }
            for r in report.results
        ]
    return doc
