"""Synthetic annotation corpora with planted structure.

The generator plants two disjoint context vocabularies plus one shared
"appears with everything" class, so the whole pipeline can be validated
against a known ground truth: the class partition, the common class, and
each image's dominant context are all known by construction.

Per image, one context is drawn uniformly and its classes appear with the
within-context probability while the other context's classes appear with
the (much smaller) cross probability. The shared class appears in half the
images; to make it genuinely co-occur with everything its presence shifts
the within-context probability up or down by ``common_swing``, which keeps
the marginal within-context rate at ``within_prob`` while correlating the
shared class positively with both vocabularies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import Dataset, ImageRecord, Instance


@dataclass(frozen=True)
class PlantedTruth:
    """Ground truth of a generated corpus."""

    context_of: dict[int, int]        # category index -> planted context id
    common: frozenset[int]            # planted shared category indices
    dominant: tuple[int, ...]         # per-image drawn context


def planted_two_context_corpus(
    n_images: int = 500,
    classes_per_context: int = 10,
    within_prob: float = 0.6,
    cross_prob: float = 0.02,
    with_common_class: bool = True,
    common_swing: float = 0.2,
    seed: int = 0,
) -> tuple[Dataset, PlantedTruth]:
    """Generate a two-context corpus with an optional shared class.

    Categories are named ``alpha_*`` (context 0), ``beta_*`` (context 1)
    and ``shared_0``; ids are 1-based and consecutive, so category index =
    id - 1. Present categories carry 1 or 2 instances each, making
    instance-count voting non-trivial.
    """
    if not 0.0 < within_prob < 1.0 or not 0.0 <= cross_prob < 1.0:
        raise ValueError("probabilities must lie in (0, 1)")
    if with_common_class and not 0.0 <= common_swing < min(within_prob, 1.0 - within_prob):
        raise ValueError("common_swing must keep the within probability in (0, 1)")

    rng = np.random.default_rng(seed)
    n_ctx = 2 * classes_per_context
    names = [f"alpha_{i:02d}" for i in range(classes_per_context)]
    names += [f"beta_{i:02d}" for i in range(classes_per_context)]
    if with_common_class:
        names.append("shared_0")
    categories = tuple((i + 1, name) for i, name in enumerate(names))

    context_of = {i: 0 for i in range(classes_per_context)}
    context_of.update({classes_per_context + i: 1 for i in range(classes_per_context)})
    common = frozenset([n_ctx]) if with_common_class else frozenset()

    def box() -> tuple[float, float, float, float]:
        x, y = rng.uniform(0.0, 400.0, size=2)
        w, h = rng.uniform(5.0, 80.0, size=2)
        return (float(x), float(y), float(w), float(h))

    images = []
    dominant = []
    for image_id in range(1, n_images + 1):
        ctx = int(rng.integers(0, 2))
        dominant.append(ctx)
        shared_here = with_common_class and rng.random() < 0.5
        p_within = within_prob + (common_swing if shared_here else -common_swing) \
            if with_common_class else within_prob

        instances = []
        for c in range(n_ctx):
            p = p_within if context_of[c] == ctx else cross_prob
            if rng.random() < p:
                for _ in range(int(rng.integers(1, 3))):
                    instances.append(Instance(category_id=c + 1, bbox=box()))
        if shared_here:
            for _ in range(int(rng.integers(1, 3))):
                instances.append(Instance(category_id=n_ctx + 1, bbox=box()))
        images.append(ImageRecord(image_id=image_id, instances=tuple(instances)))

    dataset = Dataset(categories=categories, images=tuple(images))
    return dataset, PlantedTruth(context_of=context_of, common=common,
                                 dominant=tuple(dominant))
