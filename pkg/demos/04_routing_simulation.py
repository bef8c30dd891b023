#!/usr/bin/env python3
"""Routing trade-offs: single vs multi-branch execution at several thresholds.

Runs the full simulation on the planted corpus with a 2-branch and a
4-branch plan, prices each configuration with the reference-board cost
model, and prints the efficiency/Pareto report. Lower thresholds execute
more branches (higher coverage, higher cost); single-branch execution is
the cheapest.
"""

from ctxbranch import (
    ControllerModel,
    LayoutParams,
    RoutingPolicy,
    agglomerative_cluster,
    attach_common,
    build_graph,
    build_model_plan,
    build_presence,
    calibrate_cost_model,
    emit_report,
    extract_common_objects,
    fr_layout,
    packaged_template,
    phi_correlation,
    planted_two_context_corpus,
    reference_groups,
    simulate,
)
from ctxbranch.pareto import ConfigPoint
from ctxbranch.runtime_sim import ACCURACY_PROXY_NOTE


def fitted_cost_model():
    rows = [p for g in ("retinanet-416", "retinanet-320")
            for p in reference_groups()[g]]
    return calibrate_cost_model([(p.gmacs, p.latency_ms) for p in rows],
                                [(p.gmacs, p.energy_mJ) for p in rows])


def main():
    dataset, _ = planted_two_context_corpus(n_images=500, cross_prob=0.1, seed=0)
    presence = build_presence(dataset)
    rho = phi_correlation(presence)
    common = extract_common_objects(rho)
    graph = build_graph(rho, common)
    layout = fr_layout(graph, LayoutParams(iterations=500), seed=1)

    template = packaged_template("yolo_head")
    cost_model = fitted_cost_model()
    controller = ControllerModel(kind="oracle")

    points = [ConfigPoint(
        name="static", accuracy=100.0,
        latency_ms=cost_model.latency_ms((template.backbone_macs + template.macs) / 1e9),
        energy_mJ=cost_model.energy_mJ((template.backbone_macs + template.macs) / 1e9),
        sparam_M=(template.backbone_params + template.params) / 1e6,
        dparam_M=(template.backbone_params + template.params) / 1e6,
        gmacs=(template.backbone_macs + template.macs) / 1e9,
    )]

    for k in (2, 4):
        assignment = attach_common(agglomerative_cluster(layout, k), common)
        plan = build_model_plan(assignment, template)
        policies = [RoutingPolicy("single")] + [
            RoutingPolicy("multi", t) for t in (0.1, 0.3, 0.5)
        ]
        for policy in policies:
            report = simulate(dataset, assignment, plan, controller, policy,
                              cost_model)
            agg = report.aggregates
            label = (f"{k}b-single" if policy.mode == "single"
                     else f"{k}b-multi{policy.threshold:g}")
            points.append(ConfigPoint(
                name=label, accuracy=100.0 * agg.mean_coverage,
                latency_ms=agg.mean_latency_ms, energy_mJ=agg.mean_energy_mJ,
                sparam_M=report.sparam / 1e6,
                dparam_M=agg.mean_dynamic_params / 1e6,
                gmacs=agg.mean_dynamic_macs / 1e9,
            ))

    print(emit_report(points, baseline_name="static", fmt="text",
                      cost_axis="energy", note=ACCURACY_PROXY_NOTE))
    best = min(points[1:], key=lambda p: p.energy_mJ)
    saved = 100.0 * (1 - best.energy_mJ / points[0].energy_mJ)
    print(f"cheapest adaptive configuration: {best.name} "
          f"({saved:.0f}% energy below the static head)")


if __name__ == "__main__":
    main()
