"""Single-tuple baseline decomposition (two-way labels only).

Shares the sweep/deflation schedule with the main engine but replaces
the full peer ring by one randomly drawn partner tuple per extraction,
and decides joint versus individual at extraction time by thresholding
the tuple cost.  Partially joint structure is invisible to this
variant: every source comes out labeled joint or individual.
"""
from __future__ import annotations

import numpy as np

from .classify import build_features
from .engine import build_cost_matrix, run_jpji_ica
from .types import AlgoConfig, Decomposition, SourceKind, SourceLabel, SubjectDataset


def build_m_joint(
    z: np.ndarray, partners: np.ndarray, weights: tuple[float, float, float]
):
    """Single-tuple cost matrix: ring position 0 only."""
    return build_cost_matrix(z, partners, weights, alphas="first")


def build_m_individual(z: np.ndarray, y: np.ndarray, weights: tuple[float, float, float]):
    """Self-partner cost matrix used for individual extraction."""
    return build_cost_matrix(z, np.atleast_2d(y), weights)


def run_ji_thica(
    datasets: list[SubjectDataset], config: AlgoConfig | None = None
) -> Decomposition:
    """Run the single-tuple decomposition and attach two-way labels.

    The label of each source is the final-sweep extraction decision:
    joint if the tuple cost cleared the threshold (sigma0, or its
    automatic value), individual otherwise.
    """
    decomp = run_jpji_ica(datasets, config, algorithm="jithica")
    features = build_features(decomp)
    k_total = decomp.n_subjects
    labels: list[list[SourceLabel]] = []
    for k in range(k_total):
        subject_labels: list[SourceLabel] = []
        own = 0
        for c in range(decomp.n_slots):
            if np.isnan(decomp.extraction_costs[c, k]):
                continue
            holders = frozenset(
                j
                for j in range(k_total)
                if j != k and not np.isnan(decomp.extraction_costs[c, j])
            )
            if decomp.self_mode[c, k] or not holders:
                kind, peers = SourceKind.INDIVIDUAL, frozenset()
            elif len(holders) == k_total - 1:
                kind, peers = SourceKind.JOINT, holders
            else:
                # Ragged orders: "shared" can only mean the slot holders.
                kind, peers = SourceKind.PARTIALLY_JOINT, holders
            subject_labels.append(
                SourceLabel(kind=kind, peers=peers, n_subjects=k_total, subject=k)
            )
            own += 1
        labels.append(subject_labels)
    decomp.features = features
    decomp.labels = labels
    return decomp
