import pathlib

import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # one visible pass/fail line per acceptance criterion
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.module.__name__ == "test_acceptance":
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {verdict}: {item.name}")

from ctxbranch import (
    Dataset,
    HeadTemplate,
    ImageRecord,
    Instance,
    LayerSpec,
    attach_common,
    build_presence,
    extract_common_objects,
    phi_correlation,
)
from ctxbranch.clustering import ClusterAssignment
from ctxbranch.cooccurrence import CommonObjectSet
from ctxbranch.synth import planted_two_context_corpus

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def abc_path():
    return FIXTURES / "abc_annotations.json"


@pytest.fixture(scope="session")
def planted():
    """The 2-context, 500-image corpus with a planted shared class."""
    return planted_two_context_corpus(seed=0)


@pytest.fixture(scope="session")
def planted_assignment(planted):
    dataset, _ = planted
    rho = phi_correlation(build_presence(dataset))
    common = extract_common_objects(rho, 0.1, 0.75)
    context_of = {c: (0 if c < 10 else 1) for c in range(20)}
    raw = ClusterAssignment(k=2, assignment=context_of)
    return attach_common(raw, common)


def make_dataset(instances_per_image, n_categories=None):
    """Dataset from a list of per-image category-id lists (ids are 1-based)."""
    ids = sorted({c for image in instances_per_image for c in image})
    if n_categories is not None:
        ids = sorted(set(ids) | set(range(1, n_categories + 1)))
    categories = tuple((cid, f"cat{cid}") for cid in ids)
    images = tuple(
        ImageRecord(
            image_id=i + 1,
            instances=tuple(
                Instance(category_id=c, bbox=(0.0, 0.0, 1.0, 1.0)) for c in image
            ),
        )
        for i, image in enumerate(instances_per_image)
    )
    return Dataset(categories=categories, images=images)


def toy_template(**overrides) -> HeadTemplate:
    """Small 3-layer head used by the arithmetic oracles."""
    fields = dict(
        name="toy",
        layers=(
            LayerSpec(kernel=3, in_channels=4, out_channels=8, spatial_elements=10,
                      scale_in=False),
            LayerSpec(kernel=1, in_channels=8, out_channels=6, spatial_elements=10),
            LayerSpec(kernel=1, in_channels=6, out_channels=75, spatial_elements=10,
                      scale_out=False, is_prediction=True),
        ),
        anchors_per_cell=3,
        box_fields=5,
        levels=((2, 5),),
        native_image_size=32,
        backbone_params=1000,
        backbone_macs=50_000,
        controller_params=100,
        controller_macs=2_000,
    )
    fields.update(overrides)
    return HeadTemplate(**fields)


def two_cluster_assignment() -> ClusterAssignment:
    """Six categories: {0,1,2} -> cluster 0, {3,4} -> cluster 1, 5 common."""
    common = CommonObjectSet(members=frozenset([5]), tau_common=0.1, quorum=0.75)
    raw = ClusterAssignment(k=2, assignment={0: 0, 1: 0, 2: 0, 3: 1, 4: 1})
    return attach_common(raw, common)
