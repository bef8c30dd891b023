"""Command-line entry point wiring the full pipeline.

Subcommands: ingest, cluster, design, simulate, report, and pipeline (which
chains all stages from a TOML config). Every stage is deterministic given
its seeds; outputs go only to the requested paths and each output carries a
manifest sidecar with input digests and flags.

Exit codes: 0 success, 1 runtime/domain error (with the failing stage
named), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import branch_design, clustering, cooccurrence, layout, pareto, runtime_sim
from .ingest import load_annotations, load_dataset, save_dataset
from .manifest import build_manifest, write_sidecar


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_template(value: str) -> branch_design.HeadTemplate:
    # Bare names refer to the shipped templates; anything else is a path.
    if "/" not in value and not value.endswith(".json"):
        return branch_design.packaged_template(value)
    return branch_design.load_template(value)


def cmd_ingest(args) -> int:
    dataset = load_annotations(args.annotations)
    save_dataset(dataset, args.out)
    manifest = build_manifest("ingest", {"annotations": str(args.annotations)},
                              {"annotations": args.annotations})
    write_sidecar(manifest, args.out)
    _log(f"ingest: {len(dataset.images)} images, {dataset.n_categories} categories "
         f"-> {args.out}")
    return 0


def _cluster_once(dataset, args, k: int) -> clustering.ClusterAssignment:
    presence = cooccurrence.build_presence(dataset)
    rho = cooccurrence.phi_correlation(presence)
    common = cooccurrence.extract_common_objects(rho, args.tau_common, args.quorum)
    graph = layout.build_graph(rho, common)
    params = layout.LayoutParams(iterations=args.layout_iterations, area=args.layout_area)
    positions = layout.fr_layout(graph, params, seed=args.layout_seed)
    raw = clustering.agglomerative_cluster(positions, k, linkage=args.linkage)
    return clustering.attach_common(raw, common)


def cmd_cluster(args) -> int:
    dataset = load_dataset(args.dataset)
    if args.k_list:
        ks = [int(v) for v in args.k_list.split(",") if v.strip()]
    elif args.k is not None:
        ks = [args.k]
    else:
        raise ValueError("one of --k or --k-list is required")

    flags = {
        "dataset": str(args.dataset), "tau_common": args.tau_common,
        "quorum": args.quorum, "linkage": args.linkage,
        "layout_iterations": args.layout_iterations,
        "layout_seed": args.layout_seed, "layout_area": args.layout_area,
        "k": ks,
    }
    manifest = build_manifest("cluster", flags, {"dataset": args.dataset},
                              seeds={"layout_seed": args.layout_seed})

    if args.export_dir:
        export = Path(args.export_dir)
        export.mkdir(parents=True, exist_ok=True)
        presence = cooccurrence.build_presence(dataset)
        counts = cooccurrence.build_cooccurrence(presence)
        rho = cooccurrence.phi_correlation(presence)
        names = dataset.category_names
        (export / "cooccurrence.csv").write_text(
            cooccurrence.matrix_to_csv(counts.counts, names), encoding="utf-8")
        (export / "correlation.csv").write_text(
            cooccurrence.matrix_to_csv(rho.rho, names), encoding="utf-8")
        common = cooccurrence.extract_common_objects(rho, args.tau_common, args.quorum)
        graph = layout.build_graph(rho, common)
        params = layout.LayoutParams(iterations=args.layout_iterations,
                                     area=args.layout_area)
        positions = layout.fr_layout(graph, params, seed=args.layout_seed)
        (export / "layout.csv").write_text(
            layout.layout_to_csv(positions, names), encoding="utf-8")

    for k in ks:
        assignment = _cluster_once(dataset, args, k)
        out = Path(args.out)
        path = out if len(ks) == 1 else out.with_suffix(f".k{k}{out.suffix}")
        clustering.write_clusters(assignment, dataset, path,
                                  meta={"manifest": manifest.embedded()})
        write_sidecar(manifest, path)
        _log(f"cluster: k={k}, common={sorted(assignment.common_members)} -> {path}")
    return 0


def cmd_design(args) -> int:
    dataset = load_dataset(args.dataset)
    assignment = clustering.read_clusters(args.clusters, dataset)
    template = branch_design.scale_to_image_size(_load_template(args.template),
                                                 args.image_size)
    plan = runtime_sim.build_model_plan(assignment, template)
    manifest = build_manifest(
        "design",
        {"dataset": str(args.dataset), "clusters": str(args.clusters),
         "template": args.template, "image_size": args.image_size},
        {"dataset": args.dataset, "clusters": args.clusters},
    )
    runtime_sim.write_model_plan(plan, args.out, dataset,
                                 meta={"manifest": manifest.embedded()})
    write_sidecar(manifest, args.out)
    for b in plan.branches:
        _log(f"design: branch {b.branch_id}: {len(b.classes)} classes, "
             f"factor {b.factor:.3f}, {b.params / 1e6:.2f} M params, "
             f"{b.macs / 1e9:.2f} GMACs")
    _log(f"design: sparam {plan.sparam / 1e6:.2f} M -> {args.out}")
    return 0


def _parse_sweep(spec: str) -> list[runtime_sim.RoutingPolicy]:
    policies = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "single":
            policies.append(runtime_sim.RoutingPolicy(mode="single"))
        elif token.startswith("multi:"):
            policies.append(runtime_sim.RoutingPolicy(
                mode="multi", threshold=float(token.split(":", 1)[1])))
        else:
            raise ValueError(f"bad sweep entry {token!r}; use single or multi:<thr>")
    if not policies:
        raise ValueError("sweep specification is empty")
    return policies


def _policy_name(policy: runtime_sim.RoutingPolicy, k: int) -> str:
    if policy.mode == "single":
        return f"{k}b-single"
    return f"{k}b-multi{policy.threshold:g}"


def _static_point(template: branch_design.HeadTemplate,
                  cost_model: runtime_sim.CostModel) -> pareto.ConfigPoint:
    """Reference point for the uncompressed single-head model (no
    controller, every class served all the time)."""
    gmacs = (template.backbone_macs + template.macs) / 1e9
    return pareto.ConfigPoint(
        name="static", accuracy=100.0,
        latency_ms=cost_model.latency_ms(gmacs),
        energy_mJ=cost_model.energy_mJ(gmacs),
        sparam_M=(template.backbone_params + template.params) / 1e6,
        dparam_M=(template.backbone_params + template.params) / 1e6,
        gmacs=gmacs,
    )


def _report_point(name: str, report: runtime_sim.SimulationReport) -> pareto.ConfigPoint:
    agg = report.aggregates
    return pareto.ConfigPoint(
        name=name,
        accuracy=100.0 * agg.mean_coverage,  # coverage points, not AP
        latency_ms=agg.mean_latency_ms,
        energy_mJ=agg.mean_energy_mJ,
        sparam_M=report.sparam / 1e6,
        dparam_M=agg.mean_dynamic_params / 1e6,
        gmacs=agg.mean_dynamic_macs / 1e9,
    )


def cmd_simulate(args) -> int:
    dataset = load_dataset(args.dataset)
    assignment = clustering.read_clusters(args.clusters, dataset)
    plan = runtime_sim.read_model_plan(args.plan)
    cost_model = runtime_sim.read_cost_model(args.cost_model)
    controller = runtime_sim.ControllerModel(
        kind=args.controller, noise_sigma=args.sigma, seed=args.seed)

    flags = {
        "dataset": str(args.dataset), "clusters": str(args.clusters),
        "plan": str(args.plan), "cost_model": str(args.cost_model),
        "controller": args.controller, "sigma": args.sigma, "seed": args.seed,
        "mode": args.mode, "threshold": args.threshold, "sweep": args.sweep,
        "per_image": args.per_image,
    }
    manifest = build_manifest(
        "simulate", flags,
        {"dataset": args.dataset, "clusters": args.clusters,
         "plan": args.plan, "cost_model": args.cost_model},
        seeds={"controller_seed": args.seed},
    )

    if args.sweep:
        k = len(plan.branches)
        points = []
        if args.static_template:
            template = branch_design.scale_to_image_size(
                _load_template(args.static_template), args.image_size)
            points.append(_static_point(template, cost_model))
        for policy in _parse_sweep(args.sweep):
            report = runtime_sim.simulate(dataset, assignment, plan, controller,
                                          policy, cost_model)
            points.append(_report_point(_policy_name(policy, k), report))
        Path(args.out).write_text(pareto.points_to_csv(points), encoding="utf-8")
        write_sidecar(manifest, args.out)
        _log(f"simulate: swept {len(points)} configurations -> {args.out}")
        return 0

    policy = runtime_sim.RoutingPolicy(mode=args.mode, threshold=args.threshold)
    report = runtime_sim.simulate(dataset, assignment, plan, controller, policy,
                                  cost_model)
    doc = runtime_sim.report_to_dict(report, per_image=args.per_image)
    doc["manifest"] = manifest.embedded()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_sidecar(manifest, args.out)
    agg = report.aggregates
    _log(f"simulate: coverage {agg.mean_coverage:.4f}, controller accuracy "
         f"{agg.controller_accuracy:.4f}, {agg.mean_dynamic_macs / 1e9:.2f} GMACs "
         f"-> {args.out}")
    return 0


def cmd_report(args) -> int:
    points = pareto.load_points(args.points)
    text = pareto.emit_report(points, args.baseline, fmt=args.format,
                              cost_axis=args.cost_axis, note=args.note)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        manifest = build_manifest(
            "report",
            {"points": str(args.points), "baseline": args.baseline,
             "cost_axis": args.cost_axis, "format": args.format},
            {"points": args.points},
        )
        write_sidecar(manifest, args.out)
    else:
        sys.stdout.write(text)
    return 0


def _stage(name: str, argv: list[str]) -> None:
    try:
        run(argv)
    except Exception as exc:
        raise RuntimeError(f"stage {name!r} failed: {exc}") from exc


def cmd_pipeline(args) -> int:
    with open(args.config, "rb") as fh:
        config = tomllib.load(fh)

    def section(name: str) -> dict:
        return dict(config.get(name, {}))

    pipe = section("pipeline")
    out_dir = Path(args.out_dir or pipe.get("out_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    base = Path(args.config).resolve().parent

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    ingest_cfg = section("ingest")
    dataset_path = out_dir / "dataset.json"
    _stage("ingest", ["ingest", "--annotations", str(resolve(ingest_cfg["annotations"])),
                      "--out", str(dataset_path)])

    cluster_cfg = section("cluster")
    clusters_path = out_dir / "clusters.json"
    _stage("cluster", [
        "cluster", "--dataset", str(dataset_path), "--out", str(clusters_path),
        "--k", str(cluster_cfg.get("k", 2)),
        "--tau-common", str(cluster_cfg.get("tau_common", 0.1)),
        "--quorum", str(cluster_cfg.get("quorum", 0.75)),
        "--linkage", str(cluster_cfg.get("linkage", "ward")),
        "--layout-iterations", str(cluster_cfg.get("layout_iterations", 500)),
        "--layout-seed", str(args.seed if args.seed is not None
                             else cluster_cfg.get("layout_seed", 0)),
        "--layout-area", str(cluster_cfg.get("layout_area", 1.0)),
        "--export-dir", str(out_dir / "matrices"),
    ])

    design_cfg = section("design")
    template = str(design_cfg.get("template", "yolo_head"))
    template_arg = template if "/" not in template and not template.endswith(".json") \
        else str(resolve(template))
    plan_path = out_dir / "plan.json"
    _stage("design", [
        "design", "--dataset", str(dataset_path), "--clusters", str(clusters_path),
        "--template", template_arg,
        "--image-size", str(design_cfg.get("image_size", 416)),
        "--out", str(plan_path),
    ])

    sim_cfg = section("simulate")
    sweep = sim_cfg.get("sweep", "single")
    if isinstance(sweep, list):
        sweep = ",".join(str(v) for v in sweep)
    sim_common = [
        "simulate", "--dataset", str(dataset_path), "--clusters", str(clusters_path),
        "--plan", str(plan_path), "--cost-model", str(resolve(sim_cfg["cost_model"])),
        "--controller", str(sim_cfg.get("controller", "oracle")),
        "--sigma", str(sim_cfg.get("sigma", 0.0)),
        "--seed", str(args.seed if args.seed is not None else sim_cfg.get("seed", 0)),
    ]
    _stage("simulate", sim_common + [
        "--mode", str(sim_cfg.get("mode", "single")),
        "--threshold", str(sim_cfg.get("threshold", 0.0)),
        "--out", str(out_dir / "simulation.json"),
    ] + (["--per-image"] if sim_cfg.get("per_image") else []))
    points_path = out_dir / "points.csv"
    _stage("simulate", sim_common + [
        "--sweep", str(sweep),
        "--out", str(points_path),
        "--static-template", template_arg,
        "--image-size", str(design_cfg.get("image_size", 416)),
    ])

    report_cfg = section("report")
    for fmt, suffix in (("text", "txt"), ("csv", "csv"), ("json", "json")):
        _stage("report", [
            "report", "--points", str(points_path),
            "--baseline", str(report_cfg.get("baseline", "static")),
            "--cost-axis", str(report_cfg.get("cost_axis", "energy")),
            "--format", fmt, "--out", str(out_dir / f"report.{suffix}"),
            "--note", runtime_sim.ACCURACY_PROXY_NOTE,
        ])
    _log(f"pipeline: outputs in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxbranch",
        description="Co-occurrence context clustering, branch sizing, and "
                    "adaptive routing simulation.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="parse annotations into a dataset cache")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="co-occurrence statistics, layout, clustering")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--k-list", help="comma-separated cluster counts, e.g. 2,3,4")
    p.add_argument("--tau-common", type=float, default=0.1)
    p.add_argument("--quorum", type=float, default=0.75)
    p.add_argument("--linkage", choices=clustering.LINKAGES, default="ward")
    p.add_argument("--layout-iterations", type=int, default=500)
    p.add_argument("--layout-seed", type=int, default=0)
    p.add_argument("--layout-area", type=float, default=1.0)
    p.add_argument("--export-dir", help="also write co-occurrence/correlation/layout CSVs")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("design", help="compress the head template per cluster")
    p.add_argument("--dataset", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--template", required=True,
                   help="template JSON path or shipped name (yolo_head, retinanet_head)")
    p.add_argument("--image-size", type=int, default=416)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="replay adaptive routing over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--cost-model", required=True)
    p.add_argument("--mode", choices=("single", "multi"), default="single")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--controller", choices=("oracle", "noisy"), default="oracle")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-image", action="store_true")
    p.add_argument("--sweep", help="policy grid, e.g. single,multi:0.1,multi:0.3; "
                                   "writes a points CSV instead of one report")
    p.add_argument("--static-template",
                   help="template for a 'static' reference point in sweeps")
    p.add_argument("--image-size", type=int, default=416)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="efficiency/Pareto comparison table")
    p.add_argument("--points", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--cost-axis", choices=pareto.COST_AXES, default="energy")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("--out")
    p.add_argument("--note")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override the config's output directory")
    p.add_argument("--seed", type=int, help="override layout and controller seeds")
    p.set_defaults(func=cmd_pipeline)
    return parser


def run(argv: list[str]) -> int:
    """Parse and execute one subcommand, letting errors propagate."""
    args = build_parser().parse_args(argv)
    return args.func(args)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    stage = argv[0] if argv and not argv[0].startswith("-") else "cli"
    try:
        return run(argv)
    except SystemExit:
        raise
    except Exception as exc:
        _log(f"error [{stage}]: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
