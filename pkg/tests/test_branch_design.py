import math

import pytest

from ctxbranch import (
    LayerSpec,
    attach_common,
    compress_template,
    compression_factor,
    count_macs,
    count_params,
    packaged_template,
    plan_branches,
    scale_to_image_size,
)
from ctxbranch.clustering import ClusterAssignment
from ctxbranch.cooccurrence import CommonObjectSet

from conftest import toy_template, two_cluster_assignment


def params_oracle(layers):
    """Independent accounting: k*k*cin*cout weights + cout biases."""
    return sum(l.kernel * l.kernel * l.in_channels * l.out_channels + l.out_channels
               for l in layers)


def macs_oracle(layers):
    return sum(l.kernel * l.kernel * l.in_channels * l.out_channels * l.spatial_elements
               for l in layers)


# --- compression factor ------------------------------------------------------

def test_worked_example_factors():
    assert compression_factor(18, 30) == 0.6
    assert compression_factor(12, 30) == 0.4


def test_identity_factor():
    assert compression_factor(7, 7) == 1.0


@pytest.mark.parametrize("args", [(0, 5), (-1, 5), (5, 0), (6, 5)])
def test_factor_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        compression_factor(*args)


# --- template compression -----------------------------------------------------

def test_factor_one_is_identity():
    tpl = toy_template()
    plan = compress_template(tpl, 1.0, tpl.native_num_classes)
    assert plan.layers == tpl.layers
    assert plan.params == tpl.params and plan.macs == tpl.macs


def test_half_factor_ceil_arithmetic():
    layer = LayerSpec(kernel=3, in_channels=4, out_channels=8, spatial_elements=10)
    tpl = toy_template(layers=(layer,))
    plan = compress_template(tpl, 0.5, 20)
    assert plan.layers[0].in_channels == 2
    assert plan.layers[0].out_channels == 4


def test_prediction_layer_width():
    # 3 anchors * (20 classes + 5 box fields) = 75
    tpl = toy_template()
    plan = compress_template(tpl, 0.5, 20)
    assert plan.layers[-1].out_channels == 75


def test_chain_reestablished():
    tpl = toy_template()
    for factor in (0.3, 0.55, 0.77):
        plan = compress_template(tpl, factor, 10)
        for prev, cur in zip(plan.layers, plan.layers[1:]):
            assert cur.in_channels == prev.out_channels


def test_backbone_feed_width_is_kept():
    tpl = toy_template()
    plan = compress_template(tpl, 0.25, 10)
    assert plan.layers[0].in_channels == tpl.layers[0].in_channels  # scale_in=False


def test_exact_ratio_products_do_not_round_up():
    layer = LayerSpec(kernel=1, in_channels=10, out_channels=30, spatial_elements=1)
    tpl = toy_template(layers=(layer,))
    plan = compress_template(tpl, compression_factor(12, 30), 5)
    assert plan.layers[0].in_channels == 4  # 0.4 * 10, no float bump to 5
    assert plan.layers[0].out_channels == 12


@pytest.mark.parametrize("factor", [0.0, -0.5, 1.2])
def test_factor_out_of_range(factor):
    with pytest.raises(ValueError):
        compress_template(toy_template(), factor, 10)


def test_minimum_one_channel():
    layer = LayerSpec(kernel=1, in_channels=2, out_channels=2, spatial_elements=1)
    tpl = toy_template(layers=(layer,))
    plan = compress_template(tpl, 0.01, 1)
    assert plan.layers[0].in_channels == 1
    assert plan.layers[0].out_channels == 1


# --- counting ------------------------------------------------------------------

def test_single_layer_params_by_hand():
    layer = LayerSpec(kernel=3, in_channels=4, out_channels=8, spatial_elements=10)
    assert count_params([layer]) == 296  # 3*3*4*8 + 8


def test_compressed_layer_params_by_hand():
    layer = LayerSpec(kernel=3, in_channels=2, out_channels=4, spatial_elements=10)
    assert count_params([layer]) == 76  # 3*3*2*4 + 4


def test_empty_layer_list():
    assert count_params([]) == 0
    assert count_macs([]) == 0


def test_single_layer_macs_by_hand():
    layer = LayerSpec(kernel=1, in_channels=2, out_channels=3, spatial_elements=10)
    assert count_macs([layer]) == 60


def test_macs_linear_in_spatial():
    a = LayerSpec(kernel=3, in_channels=4, out_channels=8, spatial_elements=10)
    b = LayerSpec(kernel=3, in_channels=4, out_channels=8, spatial_elements=20)
    assert count_macs([b]) == 2 * count_macs([a])


def test_counts_match_oracle_on_toy_template():
    tpl = toy_template()
    assert count_params(tpl.layers) == params_oracle(tpl.layers)
    assert count_macs(tpl.layers) == macs_oracle(tpl.layers)
    # and after compression at several factors
    for factor in (0.3, 0.5, 0.9, 1.0):
        plan = compress_template(tpl, factor, 7)
        assert plan.params == params_oracle(plan.layers)
        assert plan.macs == macs_oracle(plan.layers)


def test_monotone_in_factor():
    tpl = packaged_template("retinanet_head")
    factors = [0.2, 0.4, 0.6, 0.8, 1.0]
    plans = [compress_template(tpl, f, max(1, int(f * 80))) for f in factors]
    for a, b in zip(plans, plans[1:]):
        assert a.params <= b.params
        assert a.macs <= b.macs


def test_quadratic_scaling_of_interior_layers():
    tpl = packaged_template("retinanet_head")
    interior = [l for l in tpl.layers if l.scale_in and l.scale_out]
    for factor in (0.5, 0.67, 0.75):
        plan = compress_template(tpl, factor, 80)
        got = [l for l, t in zip(plan.layers, tpl.layers) if t.scale_in and t.scale_out]
        for before, after in zip(interior, got):
            expect = factor * factor * before.params
            # ceil rounding adds at most one channel on each end
            upper = (math.ceil(factor * before.in_channels)
                     * math.ceil(factor * before.out_channels)
                     * before.kernel ** 2 + math.ceil(factor * before.out_channels))
            assert expect <= after.params <= upper * 1.0001


# --- planning ------------------------------------------------------------------

def test_single_cluster_plan_is_the_template():
    tpl = toy_template()
    n = tpl.native_num_classes
    assignment = ClusterAssignment(k=1, assignment={c: 0 for c in range(n)})
    (plan,) = plan_branches(assignment, tpl)
    assert plan.factor == 1.0
    assert plan.layers == tpl.layers
    assert plan.params == tpl.params and plan.macs == tpl.macs


def test_worked_example_plan_factors():
    assignment = ClusterAssignment(
        k=2, assignment={c: 0 for c in range(18)} | {c: 1 for c in range(18, 30)}
    )
    plans = plan_branches(assignment, toy_template())
    assert [p.factor for p in plans] == [0.6, 0.4]
    assert [len(p.classes) for p in plans] == [18, 12]


def test_common_classes_count_in_factor():
    assignment = two_cluster_assignment()  # 3+1 and 2+1 of 6 classes
    plans = plan_branches(assignment, toy_template())
    assert plans[0].factor == pytest.approx(4 / 6)
    assert plans[1].factor == pytest.approx(3 / 6)


def test_branch_sum_below_template_at_published_split():
    # two clusters of 54 and 45 served classes out of 80
    tpl = packaged_template("retinanet_head")
    common = CommonObjectSet(members=frozenset(range(61, 80)), tau_common=0.1, quorum=0.75)
    assignment = attach_common(
        ClusterAssignment(
            k=2,
            assignment={c: 0 for c in range(35)} | {c: 1 for c in range(35, 61)},
        ),
        common,
    )
    plans = plan_branches(assignment, tpl)
    assert [len(p.classes) for p in plans] == [54, 45]
    assert sum(p.params for p in plans) < tpl.params
    assert sum(p.macs for p in plans) < tpl.macs
    for p in plans:
        assert p.params < tpl.params  # single-branch dynamic cost shrinks too


# --- shipped templates -----------------------------------------------------------

def test_shipped_yolo_template_totals():
    tpl = packaged_template("yolo_head")
    assert tpl.native_num_classes == 80
    assert tpl.params == 21_191_549
    assert tpl.macs == 8_371_930_112
    assert params_oracle(tpl.layers) == tpl.params
    assert macs_oracle(tpl.layers) == tpl.macs


def test_shipped_retinanet_template_totals():
    tpl = packaged_template("retinanet_head")
    assert tpl.native_num_classes == 80
    assert tpl.params == 6_463_220
    assert tpl.macs == 23_347_943_424
    assert params_oracle(tpl.layers) == tpl.params


def test_image_size_rescaling():
    tpl = packaged_template("yolo_head")
    scaled = scale_to_image_size(tpl, 320)
    ratio = (320 / 416) ** 2
    assert scaled.params == tpl.params  # parameters do not depend on resolution
    assert scaled.macs == pytest.approx(tpl.macs * ratio, rel=0.01)
    assert scaled.backbone_macs == pytest.approx(tpl.backbone_macs * ratio, rel=0.01)
    assert scale_to_image_size(tpl, 416) is tpl


def test_template_chain_validation():
    bad = (
        LayerSpec(kernel=1, in_channels=4, out_channels=8, spatial_elements=1),
        LayerSpec(kernel=1, in_channels=5, out_channels=2, spatial_elements=1),
    )
    with pytest.raises(ValueError, match="chain"):
        toy_template(layers=bad)


def test_prediction_layer_must_not_scale_out():
    with pytest.raises(ValueError):
        LayerSpec(kernel=1, in_channels=4, out_channels=8, spatial_elements=1,
                  scale_out=True, is_prediction=True)
