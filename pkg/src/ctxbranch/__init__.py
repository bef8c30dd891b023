"""ctxbranch: spatial-context vocabulary clustering, compressed detection-head
branch sizing, and adaptive routing simulation.

The pipeline: annotations -> presence/co-occurrence/correlation matrices ->
common-object extraction -> weighted knowledge-graph layout -> agglomerative
context clusters -> per-cluster compressed head branches -> routing
simulation with latency/energy cost models -> efficiency and Pareto reports.
No neural network is trained or executed anywhere.
"""

from .branch_design import (
    BranchPlan,
    HeadTemplate,
    LayerSpec,
    compress_template,
    compression_factor,
    count_macs,
    count_params,
    load_template,
    packaged_template,
    plan_branches,
    scale_to_image_size,
)
from .clustering import (
    ClusterAssignment,
    agglomerative_cluster,
    attach_common,
    read_clusters,
    write_clusters,
)
from .cooccurrence import (
    CommonObjectSet,
    CooccurrenceMatrix,
    CorrelationMatrix,
    PresenceMatrix,
    build_cooccurrence,
    build_presence,
    extract_common_objects,
    phi_correlation,
)
from .errors import ConsistencyError, NumericalError, SchemaError
from .ingest import (
    Dataset,
    ImageRecord,
    Instance,
    dataset_from_coco,
    dataset_to_coco,
    load_annotations,
    load_dataset,
    save_dataset,
)
from .layout import ContextGraph, Layout, LayoutParams, build_graph, fr_layout
from .pareto import (
    ConfigPoint,
    FrontierResult,
    efficiency,
    emit_report,
    load_points,
    pareto_front,
    percent_delta,
    reference_groups,
    reference_points,
)
from .runtime_sim import (
    ControllerModel,
    CostModel,
    ModelPlan,
    RoutingPolicy,
    SimulationReport,
    build_model_plan,
    calibrate_cost_model,
    calibrate_noise_sigma,
    context_fractions,
    controller_accuracy,
    controller_scores,
    coverage,
    dominant_context,
    most_frequent_cluster,
    route,
    simulate,
)
from .synth import PlantedTruth, planted_two_context_corpus

__version__ = "0.1.0"
