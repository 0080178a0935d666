"""Synthetic multi-subject datasets with known joint structure.

Spatial sources are sparse positive Gaussian-blob maps on a square grid
(line segments when the voxel count is not a perfect square), which
makes them strongly super-Gaussian; time courses are smoothed white
noise.  Every map is standardized to zero mean and unit variance over
voxels, and maps are redrawn until all pairwise correlations stay small
so simulated sources are effectively independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidScenario, RankDeficientMixing
from .numerics import excess_kurtosis, standardize
from .seeding import rng_for
from .types import GroundTruth, SourceKind, SourceLabel, SubjectDataset

_MAX_MIXING_COND = 1e3
_MAX_MAP_CORR = 0.1


@dataclass(frozen=True)
class ScenarioSpec:
    """Structure of one simulated experiment.

    ``n_pjoint``, ``n_individual`` and ``n_time`` take either a single
    value for all subjects or one value per subject.  Subjects are
    partitioned into ``n_clusters`` contiguous near-equal groups unless
    an explicit ``clusters`` partition is given; partially joint maps
    are shared within a cluster.  Sharing a fourth-order cumulant ring
    needs more than three in-cluster peers, so clusters carrying
    partially joint sources must have at least five members unless
    ``allow_small_clusters`` is set.
    """

    n_subjects: int
    n_joint: int
    n_pjoint: int | tuple[int, ...] = 0
    n_individual: int | tuple[int, ...] = 0
    n_clusters: int = 2
    clusters: tuple[tuple[int, ...], ...] | None = None
    n_voxels: int = 4096
    n_time: int | tuple[int, ...] = 150
    snr_db: float | None = None
    seed: int = 0
    allow_small_clusters: bool = False

    def __post_init__(self) -> None:
        k = self.n_subjects
        if k < 1:
            raise InvalidScenario("need at least one subject")
        if self.n_voxels < 16:
            raise InvalidScenario("need at least 16 voxels")
        if self.n_joint < 0:
            raise InvalidScenario("joint source count must be >= 0")
        pj = self.pjoint_counts
        iv = self.individual_counts
        nt = self.time_counts
        if any(x < 0 for x in pj) or any(x < 0 for x in iv):
            raise InvalidScenario("per-subject source counts must be >= 0")
        for idx in range(k):
            total = self.n_joint + pj[idx] + iv[idx]
            if total < 1:
                raise InvalidScenario(f"subject {idx} has no sources")
            if nt[idx] < total + 2:
                raise InvalidScenario(
                    f"subject {idx}: {nt[idx]} time points cannot mix {total} sources"
                )
            if total > self.n_voxels:
                raise InvalidScenario("more sources than voxels")
        part = self.partition
        if sorted(j for grp in part for j in grp) != list(range(k)):
            raise InvalidScenario("clusters must partition the subjects")
        if any(pj):
            if len(part) < 2:
                raise InvalidScenario(
                    "partially joint sources need at least two clusters"
                )
            for grp in part:
                shares = [j for j in grp if pj[j] > 0]
                if not shares:
                    continue
                if len(grp) < 2:
                    raise InvalidScenario("a sharing cluster needs at least 2 members")
                if len(grp) < 5 and not self.allow_small_clusters:
                    raise InvalidScenario(
                        "sharing clusters need >= 5 members for fourth-order rings"
                        " (set allow_small_clusters to override)"
                    )
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise InvalidScenario("snr_db must be finite or None")

    @property
    def pjoint_counts(self) -> tuple[int, ...]:
        return _per_subject(self.n_pjoint, self.n_subjects)

    @property
    def individual_counts(self) -> tuple[int, ...]:
        return _per_subject(self.n_individual, self.n_subjects)

    @property
    def time_counts(self) -> tuple[int, ...]:
        return _per_subject(self.n_time, self.n_subjects)

    @property
    def partition(self) -> tuple[tuple[int, ...], ...]:
        if self.clusters is not None:
            return tuple(tuple(int(j) for j in grp) for grp in self.clusters)
        k, q = self.n_subjects, max(1, self.n_clusters)
        sizes = [k // q + (1 if i < k % q else 0) for i in range(q)]
        out, start = [], 0
        for s in sizes:
            if s > 0:
                out.append(tuple(range(start, start + s)))
            start += s
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "n_joint": self.n_joint,
            "n_pjoint": list(self.pjoint_counts),
            "n_individual": list(self.individual_counts),
            "n_clusters": self.n_clusters,
            "clusters": [list(g) for g in self.partition],
            "n_voxels": self.n_voxels,
            "n_time": list(self.time_counts),
            "snr_db": self.snr_db,
            "seed": self.seed,
            "allow_small_clusters": self.allow_small_clusters,
        }


def _per_subject(value: int | tuple[int, ...], k: int) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,) * k
    value = tuple(int(x) for x in value)
    if len(value) != k:
        raise InvalidScenario(f"expected {k} per-subject values, got {len(value)}")
    return value


def generate_spatial_source(
    n_voxels: int,
    rng: np.random.Generator,
    min_kurtosis: float = 1.0,
    max_tries: int = 100,
) -> np.ndarray:
    """One standardized blob map with excess kurtosis above the floor."""
    side = math.isqrt(n_voxels)
    two_d = side * side == n_voxels and side >= 8
    for _ in range(max_tries):
        if two_d:
            yy, xx = np.mgrid[0:side, 0:side]
            m = np.zeros((side, side))
            # Exactly two blobs: every extra blob raises the chance of
            # overlapping some other map, and scenarios with many subjects
            # need pools of 20+ mutually decorrelated maps.
            for _ in range(2):
                w = rng.uniform(side / 32.0, side / 24.0)
                # Keep blobs inside the grid: clipping would skew kurtosis.
                lo, hi = (2 * w, side - 2 * w) if side > 4 * w else (0.0, float(side))
                cx, cy = rng.uniform(lo, hi, 2)
                # Mixed signs keep the raw mean near zero; same-sign blob
                # maps all share a background after standardization and a
                # large pool can then never stay mutually decorrelated.
                amp = rng.uniform(0.8, 1.2) * (1.0 if rng.integers(2) else -1.0)
                m += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * w * w))
            flat = m.ravel()
        else:
            pos = np.arange(n_voxels, dtype=float)
            flat = np.zeros(n_voxels)
            for _ in range(int(rng.integers(2, 4))):
                # Line segments lack the second dimension of the grid, so
                # widths must be narrower for comparable sparsity.
                w = rng.uniform(n_voxels / 120.0, n_voxels / 80.0)
                lo, hi = (2 * w, n_voxels - 2 * w) if n_voxels > 4 * w else (0.0, float(n_voxels))
                c = rng.uniform(lo, hi)
                amp = rng.uniform(0.8, 1.2) * (1.0 if rng.integers(2) else -1.0)
                flat = flat + amp * np.exp(-((pos - c) ** 2) / (2 * w * w))
        if flat.std() < 1e-12:
            continue
        out = standardize(flat)
        if excess_kurtosis(out) >= min_kurtosis:
            return out
    raise InvalidScenario(f"no map with kurtosis >= {min_kurtosis} in {max_tries} tries")


def _draw_independent_map(
    n_voxels: int,
    rng: np.random.Generator,
    existing: list[np.ndarray],
    max_tries: int = 2000,
) -> np.ndarray:
    """A new map nearly uncorrelated with all previously drawn maps."""
    for _ in range(max_tries):
        cand = generate_spatial_source(n_voxels, rng)
        if all(
            abs(float(cand @ prev)) / n_voxels <= _MAX_MAP_CORR for prev in existing
        ):
            return cand
    raise InvalidScenario("could not draw enough mutually uncorrelated maps")


def _smooth_mixing(rng: np.random.Generator, n_time: int, n_cols: int) -> np.ndarray:
    """Smooth full-column-rank time courses, standardized per column."""
    span = max(3, n_time // 10)
    kernel = np.hanning(span + 2)[1:-1]
    kernel = kernel / kernel.sum()
    for attempt in range(2):
        white = rng.standard_normal((n_time + span, n_cols))
        cols = []
        for j in range(n_cols):
            smooth = np.convolve(white[:, j], kernel, mode="same")[:n_time]
            cols.append(standardize(smooth))
        a = np.stack(cols, axis=1)
        if n_cols == 1 or np.linalg.cond(a) <= _MAX_MIXING_COND:
            return a
    raise RankDeficientMixing(
        f"mixing condition number above {_MAX_MIXING_COND:g} twice in a row"
    )


def add_noise(
    observations: np.ndarray, snr_db: float, rng: np.random.Generator
) -> np.ndarray:
    """Additive white Gaussian noise at the requested signal-to-noise ratio."""
    obs = np.asarray(observations, dtype=float)
    if math.isinf(snr_db):
        return obs.copy()
    p_signal = float(np.mean(obs * obs))
    sigma = math.sqrt(p_signal / (10.0 ** (snr_db / 10.0)))
    return obs + sigma * rng.standard_normal(obs.shape)


def generate_dataset(spec: ScenarioSpec) -> tuple[list[SubjectDataset], GroundTruth]:
    """Observations plus ground truth for one scenario.

    Joint maps are shared by everyone, each cluster gets its own stack of
    partially joint maps (subject k uses the first n_pjoint[k] of its
    cluster's stack), and individual maps are unique per subject.  A
    partially joint map that ends up with a single user (asymmetric
    per-subject counts) is labeled individual in the truth.
    """
    k_total = spec.n_subjects
    pj_counts = spec.pjoint_counts
    iv_counts = spec.individual_counts
    nt = spec.time_counts
    partition = spec.partition
    rng_maps = rng_for(spec.seed, "maps")

    pool: list[np.ndarray] = []

    def draw() -> np.ndarray:
        m = _draw_independent_map(spec.n_voxels, rng_maps, pool)
        pool.append(m)
        return m

    joint_maps = [draw() for _ in range(spec.n_joint)]
    cluster_of = {j: qi for qi, grp in enumerate(partition) for j in grp}
    pj_maps: dict[int, list[np.ndarray]] = {}
    for qi, grp in enumerate(partition):
        depth = max((pj_counts[j] for j in grp), default=0)
        pj_maps[qi] = [draw() for _ in range(depth)]
    iv_maps = {k: [draw() for _ in range(iv_counts[k])] for k in range(k_total)}

    datasets: list[SubjectDataset] = []
    sources: list[np.ndarray] = []
    mixing: list[np.ndarray] = []
    labels: list[list[SourceLabel]] = []
    true_pj: list[int] = []
    true_iv: list[int] = []
    cluster_map: dict[str, frozenset[int]] = {}
    width = max(2, len(str(k_total)))
    everyone = frozenset(range(k_total))

    for qi, grp in enumerate(partition):
        for i in range(len(pj_maps[qi])):
            sharers = frozenset(j for j in grp if pj_counts[j] > i)
            if len(sharers) >= 2:
                cluster_map[f"pj{qi}_{i}"] = sharers

    for k in range(k_total):
        qi = cluster_of[k]
        rows = list(joint_maps) + pj_maps[qi][: pj_counts[k]] + iv_maps[k]
        s = np.stack(rows)
        subject_labels: list[SourceLabel] = []
        n_pj_eff, n_iv_eff = 0, iv_counts[k]
        for _ in range(spec.n_joint):
            subject_labels.append(
                SourceLabel(
                    kind=SourceKind.JOINT,
                    peers=everyone - {k},
                    n_subjects=k_total,
                    subject=k,
                )
            )
        for i in range(pj_counts[k]):
            sharers = cluster_map.get(f"pj{qi}_{i}", frozenset())
            peers = sharers - {k}
            if peers:
                subject_labels.append(
                    SourceLabel(
                        kind=SourceKind.PARTIALLY_JOINT,
                        peers=peers,
                        n_subjects=k_total,
                        subject=k,
                    )
                )
                n_pj_eff += 1
            else:
                subject_labels.append(
                    SourceLabel(
                        kind=SourceKind.INDIVIDUAL,
                        peers=frozenset(),
                        n_subjects=k_total,
                        subject=k,
                    )
                )
                n_iv_eff += 1
        for _ in range(iv_counts[k]):
            subject_labels.append(
                SourceLabel(
                    kind=SourceKind.INDIVIDUAL,
                    peers=frozenset(),
                    n_subjects=k_total,
                    subject=k,
                )
            )
        a = _smooth_mixing(rng_for(spec.seed, "mixing", k), nt[k], s.shape[0])
        obs = a @ s
        if spec.snr_db is not None:
            obs = add_noise(obs, spec.snr_db, rng_for(spec.seed, "noise", k))
        datasets.append(SubjectDataset(subject_id=f"sub{k + 1:0{width}d}", observations=obs))
        sources.append(s)
        mixing.append(a)
        labels.append(subject_labels)
        true_pj.append(n_pj_eff)
        true_iv.append(n_iv_eff)

    truth = GroundTruth(
        sources=sources,
        mixing=mixing,
        labels=labels,
        joint_count=spec.n_joint,
        pjoint_counts=true_pj,
        individual_counts=true_iv,
        cluster_map=cluster_map,
    )
    return datasets, truth


def random_scenario(
    seed: int,
    n_subjects: int = 10,
    joint_range: tuple[int, int] = (1, 3),
    pjoint_range: tuple[int, int] = (0, 3),
    individual_range: tuple[int, int] = (0, 2),
    n_clusters: int = 2,
    n_voxels: int = 4096,
    n_time: int = 150,
    snr_db: float | None = None,
) -> ScenarioSpec:
    """Uniformly drawn source counts within the given inclusive ranges.

    Redraws until the scenario is structurally valid (at least one
    source per subject, enough time points); counts are shared by all
    subjects.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(97,)))
    for _ in range(100):
        c1 = int(rng.integers(joint_range[0], joint_range[1] + 1))
        c2 = int(rng.integers(pjoint_range[0], pjoint_range[1] + 1))
        c3 = int(rng.integers(individual_range[0], individual_range[1] + 1))
        if c1 + c2 + c3 < 1:
            continue
        try:
            return ScenarioSpec(
                n_subjects=n_subjects,
                n_joint=c1,
                n_pjoint=c2,
                n_individual=c3,
                n_clusters=n_clusters,
                n_voxels=n_voxels,
                n_time=n_time,
                snr_db=snr_db,
                seed=seed,
            )
        except InvalidScenario:
            continue
    raise InvalidScenario("could not draw a valid scenario from the given ranges")
