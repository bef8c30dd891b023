"""Category co-occurrence statistics.

The pipeline starts from per-image binary presence vectors, counts how often
pairs of categories share a scene, converts the counts into a phi-coefficient
correlation matrix, and pulls out the "common objects": categories whose
presence correlates with most of the vocabulary and that every downstream
branch therefore has to serve.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .ingest import Dataset


@dataclass(frozen=True)
class PresenceMatrix:
    """Per-image binary category presence; bits[i, c] == 1 iff image i
    contains at least one instance of category index c."""

    bits: np.ndarray  # bool, shape (n_images, n_categories)

    @property
    def n_images(self) -> int:
        return self.bits.shape[0]

    @property
    def n_categories(self) -> int:
        return self.bits.shape[1]


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Symmetric image-pair counts; counts[a, b] = number of images that
    contain both a and b, diagonal = per-category image counts."""

    counts: np.ndarray  # int64, shape (n, n)
    n_images: int


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pairwise phi coefficients of the presence columns, in [-1, 1].

    Constant columns (never or always present) get 0 everywhere, including
    their own diagonal, so the knowledge graph stays well-defined.
    """

    rho: np.ndarray  # float64, shape (n, n)


@dataclass(frozen=True)
class CommonObjectSet:
    """Categories correlated (rho > tau_common) with more than a quorum
    fraction of the other categories."""

    members: frozenset[int]
    tau_common: float
    quorum: float


def build_presence(dataset: Dataset) -> PresenceMatrix:
    """Collapse instance multiplicity into per-image presence bits.

    Images with no annotations produce all-zero rows and contribute nothing
    to the statistics.
    """
    bits = np.zeros((len(dataset.images), dataset.n_categories), dtype=bool)
    for i, image in enumerate(dataset.images):
        for inst in image.instances:
            bits[i, dataset.category_index(inst.category_id)] = True
    return PresenceMatrix(bits)


def build_cooccurrence(presence: PresenceMatrix) -> CooccurrenceMatrix:
    """Count, for every category pair, the images containing both."""
    if presence.n_images == 0:
        raise ValueError("presence matrix has no images")
    bits = presence.bits.astype(np.int64)
    return CooccurrenceMatrix(counts=bits.T @ bits, n_images=presence.n_images)


def phi_correlation(presence: PresenceMatrix) -> CorrelationMatrix:
    """Phi coefficient (Pearson correlation of binary columns) per pair.

    For columns a, b with 2x2 contingency counts ``nxy``:

        rho = (n11 * n00 - n10 * n01) / sqrt(n1. * n0. * n.1 * n.0)

    Any pair involving a constant column is defined as 0 rather than NaN,
    and the diagonal of a constant column is 0 as well.
    """
    n = presence.n_images
    if n < 2:
        raise ValueError("phi correlation needs at least 2 images")
    bits = presence.bits.astype(np.int64)
    n11 = bits.T @ bits
    ones = np.diag(n11).astype(np.float64)  # per-category image counts
    zeros = n - ones

    # n10[a,b] = images with a but not b; n00 = images with neither.
    n10 = ones[:, None] - n11
    n01 = ones[None, :] - n11
    n00 = n - n11 - n10 - n01

    numer = n11 * n00 - n10 * n01
    denom = np.sqrt(np.outer(ones * zeros, ones * zeros))
    constant = (ones == 0) | (ones == n)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(denom > 0, numer / denom, 0.0)
    rho[constant, :] = 0.0
    rho[:, constant] = 0.0
    np.fill_diagonal(rho, np.where(constant, 0.0, 1.0))
    return CorrelationMatrix(rho=np.clip(rho, -1.0, 1.0))


def extract_common_objects(
    rho: CorrelationMatrix, tau_common: float = 0.1, quorum: float = 0.75
) -> CommonObjectSet:
    """Select categories correlated above tau_common with more than
    ``quorum`` of the other categories.

    Membership rule: a is a member iff |{b != a : rho[a,b] > tau_common}|
    exceeds quorum * (n - 1).
    """
    if not 0.0 < quorum < 1.0:
        raise ValueError(f"quorum must be in (0, 1), got {quorum}")
    if tau_common < 0.0:
        raise ValueError(f"tau_common must be >= 0, got {tau_common}")
    m = rho.rho
    n = m.shape[0]
    above = (m > tau_common).astype(np.int64)
    np.fill_diagonal(above, 0)
    members = frozenset(np.flatnonzero(above.sum(axis=1) > quorum * (n - 1)).tolist())
    return CommonObjectSet(members=members, tau_common=tau_common, quorum=quorum)


def matrix_to_csv(values: np.ndarray, names: list[str]) -> str:
    """Render a square category matrix as CSV with name headers."""
    if values.shape != (len(names), len(names)):
        raise ValueError("matrix shape does not match the category names")
    buf = io.StringIO()
    buf.write("," + ",".join(names) + "\n")
    for name, row in zip(names, values):
        buf.write(name + "," + ",".join(repr(v) for v in row.tolist()) + "\n")
    return buf.getvalue()
