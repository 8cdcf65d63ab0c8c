"""Weighted model averaging used by every protocol stage.

Each aggregation takes an ordered list of (weight, model) terms. The vector algebra
forms the weighted mean with a fixed left-to-right accumulation, so equal inputs give
bit-identical outputs whatever engine produced them. The tag algebra replaces every
average with a set union and is used to trace which servers a model has heard from.
"""

from typing import FrozenSet, List, Sequence, Tuple, TypeVar

import numpy as np

from src.core.errors import AggregationError

T = TypeVar("T")
Term = Tuple[float, T]

COEFFICIENT_TOLERANCE = 1e-12


def _nonzero(terms: Sequence[Term]) -> List[Term]:
    for weight, _ in terms:
        if weight < 0 or not np.isfinite(weight):
            raise AggregationError(f"aggregation weight {weight} is not a non-negative number")
    kept = [(w, m) for w, m in terms if w > 0]
    if not kept:
        raise AggregationError("aggregation needs at least one positive weight")
    return kept


class VectorAlgebra:
    """Weighted averages of parameter vectors."""

    name = "vector"

    def combine(self, terms: Sequence[Term]) -> np.ndarray:
        kept = _nonzero(terms)
        first = kept[0][1]
        if len(kept) == 1 or all(np.array_equal(first, m) for _, m in kept[1:]):
            return np.array(first, dtype=np.float64, copy=True)
        total = 0.0
        for weight, _ in kept:
            total += weight
        mass = 0.0
        acc = np.zeros_like(first, dtype=np.float64)
        for weight, model in kept:
            coefficient = weight / total
            mass += coefficient
            acc += coefficient * model
        if abs(mass - 1.0) > COEFFICIENT_TOLERANCE:
            raise AggregationError(f"aggregation coefficients sum to {mass!r}, expected 1")
        return acc


class TagAlgebra:
    """Provenance sets; aggregation is the union of every positively weighted input."""

    name = "tags"

    def combine(self, terms: Sequence[Term]) -> FrozenSet[int]:
        kept = _nonzero(terms)
        merged: FrozenSet[int] = frozenset()
        for _, tags in kept:
            merged = merged | tags
        return merged


def edge_average(algebra, uploads: Sequence[Term]):
    """Initial cell model from the uploaded local models, weighted by data size."""
    return algebra.combine(uploads)


def relay_merge(algebra, edge_weight: float, edge_model, roc_weight: float, roc_model):
    """ROC merge of a neighbour's cell model with its own local model.

    Returns:
        Tuple of (merged model, composite weight carried with it)
    """
    merged = algebra.combine([(edge_weight, edge_model), (roc_weight, roc_model)])
    return merged, edge_weight + roc_weight


def edge_update(algebra, own: Term, left=None, right=None):
    """Three-way update of a server from its own cell model and the relayed neighbours.

    ``left``/``right`` are (composite weight, model) or None for a missing neighbour,
    which then contributes zero weight.
    """
    terms = []
    if left is not None:
        terms.append(left)
    terms.append(own)
    if right is not None:
        terms.append(right)
    return algebra.combine(terms)


def cloud_average(algebra, cells: Sequence[Term]):
    """Cloud model from per-cell aggregates weighted by cell data size."""
    return algebra.combine(cells)


def regrouped_edge_update(algebra, server: int, cell_terms: Sequence[Term]):
    """Server model written as the weighted mean of neighbouring cell aggregates.

    ``cell_terms[j]`` is (N_hat_j, w_hat_j) for the cell partition in which every ROC
    belongs to exactly one cell. For a three-server chain this equals the relay
    pipeline result. The round engines never call it; it is the reference form the
    relay pipeline is checked against.
    """
    lo, hi = max(server - 1, 0), min(server + 1, len(cell_terms) - 1)
    return algebra.combine(list(cell_terms[lo:hi + 1]))
