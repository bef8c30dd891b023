#!/usr/bin/env python3
"""Regenerate the committed demo inputs.

Writes data/annotations.json (a 500-image planted two-context corpus in the
COCO annotation subset) and data/cost_model.json (latency/energy model
fitted to the shipped reference board measurements). Both outputs are
deterministic, so reruns leave the files unchanged.
"""

import json
import pathlib

from ctxbranch import (
    calibrate_cost_model,
    dataset_to_coco,
    planted_two_context_corpus,
    reference_groups,
)
from ctxbranch.runtime_sim import write_cost_model

HERE = pathlib.Path(__file__).parent
DATA = HERE / "data"


def main():
    DATA.mkdir(exist_ok=True)

    dataset, truth = planted_two_context_corpus(n_images=500, seed=0)
    path = DATA / "annotations.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_coco(dataset), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    print(f"wrote {path}: {len(dataset.images)} images, "
          f"{dataset.n_categories} categories "
          f"(common class index {sorted(truth.common)})")

    groups = reference_groups()
    rows = groups["retinanet-416"] + groups["retinanet-320"]
    cost = calibrate_cost_model(
        [(p.gmacs, p.latency_ms) for p in rows],
        [(p.gmacs, p.energy_mJ) for p in rows],
    )
    write_cost_model(cost, DATA / "cost_model.json")
    print(f"wrote {DATA / 'cost_model.json'}: latency = {cost.a_lat:.2f}*GMACs "
          f"+ {cost.b_lat:.1f} ms (R^2 {cost.r2_latency:.3f}), energy = "
          f"{cost.a_en:.2f}*GMACs + {cost.b_en:.1f} mJ (R^2 {cost.r2_energy:.3f})")


if __name__ == "__main__":
    main()
