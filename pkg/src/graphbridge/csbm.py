"""Contextual stochastic block model pairs with covariate and label shift."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .bridger import cosine_matrix
from .graphstore import SOURCE, TARGET, Graph, build_graph, combine, symmetric_normalize
from .metrics import center_distance, intra_class_edge_ratio


@dataclass(frozen=True)
class DomainSpec:
    """Class sizes and class-conditional Gaussian feature parameters for one domain."""

    class_counts: tuple
    means: np.ndarray  # (C, d)
    stds: tuple  # one scalar per class

    def __post_init__(self):
        object.__setattr__(self, "class_counts", tuple(int(c) for c in self.class_counts))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "stds", tuple(float(s) for s in self.stds))


@dataclass(frozen=True)
class CsbmSpec:
    num_classes: int
    dim: int
    p_intra: float
    p_inter: float
    source: DomainSpec
    target: DomainSpec
    seed: int = 0

    def __post_init__(self):
        validate(self)

    def domain(self, name: str) -> DomainSpec:
        if name == SOURCE:
            return self.source
        if name == TARGET:
            return self.target
        raise ValidationError(f"unknown domain {name!r}")


def validate(spec: CsbmSpec):
    if not 0.0 <= spec.p_inter <= spec.p_intra <= 1.0:
        raise ValidationError("need 0 <= p_inter <= p_intra <= 1")
    for name in (SOURCE, TARGET):
        dom = spec.domain(name)
        if len(dom.class_counts) != spec.num_classes or len(dom.stds) != spec.num_classes:
            raise ValidationError(f"{name}: expected {spec.num_classes} classes")
        if dom.means.shape != (spec.num_classes, spec.dim):
            raise ValidationError(f"{name}: means must have shape ({spec.num_classes}, {spec.dim}), got {dom.means.shape}")
        if min(dom.class_counts) <= 0:
            raise ValidationError(f"{name}: class counts must be positive")
        if min(dom.stds) <= 0:
            raise ValidationError(f"{name}: feature std must be positive")


def class_means(num_classes: int, dim: int, separation: float = 1.0) -> np.ndarray:
    """Block-indicator means: class c is ``separation`` on its own slice of coordinates."""
    means = np.zeros((num_classes, dim))
    for c, block in enumerate(np.array_split(np.arange(dim), num_classes)):
        means[c, block] = separation
    return means


def shift_pair_spec(
    nodes_per_domain: int = 400,
    *,
    dim: int = 16,
    source_ratio=(3, 1),
    target_ratio=(1, 3),
    p_intra: float = 0.08,
    p_inter: float = 0.02,
    separation: float = 1.0,
    std: float = 1.0,
    shift: float = 0.5,
    seed: int = 0,
) -> CsbmSpec:
    """Two-domain spec with label shift (class ratios) and a mean offset on the target."""
    c = len(source_ratio)
    if len(target_ratio) != c:
        raise ValidationError("source and target ratios must list the same number of classes")
    means = class_means(c, dim, separation)
    return CsbmSpec(
        num_classes=c,
        dim=dim,
        p_intra=p_intra,
        p_inter=p_inter,
        source=DomainSpec(_split(nodes_per_domain, source_ratio), means, (std,) * c),
        target=DomainSpec(_split(nodes_per_domain, target_ratio), means + shift, (std,) * c),
        seed=seed,
    )


def _split(n, ratio):
    ratio = np.asarray(ratio, dtype=np.float64)
    counts = np.floor(n * ratio / ratio.sum()).astype(int)
    counts[np.argmax(ratio)] += n - counts.sum()
    return tuple(int(x) for x in counts)


def sample_block_edges(labels: np.ndarray, p_intra: float, p_inter: float, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw for every unordered pair (u < v)."""
    n = labels.size
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_intra, p_inter)
    keep = rng.random(iu.size) < prob
    return np.stack([iu[keep], ju[keep]], axis=1)


def generate_domain(spec: CsbmSpec, domain: str, rng: np.random.Generator) -> Graph:
    dom = spec.domain(domain)
    labels = np.repeat(np.arange(spec.num_classes), dom.class_counts)
    edges = sample_block_edges(labels, spec.p_intra, spec.p_inter, rng)
    noise = rng.standard_normal((labels.size, spec.dim))
    stds = np.asarray(dom.stds)[labels][:, None]
    features = dom.means[labels] + stds * noise
    return build_graph(labels.size, edges, features, labels, domain=domain)


def generate_shift_pair(spec: CsbmSpec, seed: int | None = None) -> tuple:
    """Independent source and target graphs from child streams of one seed."""
    seed = spec.seed if seed is None else seed
    src_rng, tgt_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    return generate_domain(spec, SOURCE, src_rng), generate_domain(spec, TARGET, tgt_rng)


@dataclass(frozen=True)
class ShiftStudy:
    """Per-class center distances after one-hop propagation, without and with bridging edges."""

    distance_before: tuple
    distance_after: tuple
    inserted: int
    intra_class_ratio: float | None

    @property
    def reduced(self) -> bool:
        return all(a < b for a, b in zip(self.distance_after, self.distance_before))


def one_hop(cg) -> np.ndarray:
    """Â^C X^C on the current combined graph."""
    return symmetric_normalize(cg.combined_adjacency).to_scipy() @ cg.features


def shift_reduction_study(spec: CsbmSpec, seed: int | None = None, threshold: float = 0.7) -> ShiftStudy:
    """Bridge the domains by raw-feature cosine above ``threshold`` and compare class centers.

    Inserted edges have weight 1. Centers use true labels on both sides.
    """
    source, target = generate_shift_pair(spec, seed)
    cg = combine(source, target)
    n_s, c = source.node_count, spec.num_classes
    before = one_hop(cg)
    d0 = center_distance(before[:n_s], source.labels, before[n_s:], target.labels, c)
    ti, sj = np.nonzero(cosine_matrix(target.features, source.features) > threshold)
    cg._set_inserted(sj, ti + n_s, np.ones(ti.size))
    after = one_hop(cg)
    d1 = center_distance(after[:n_s], source.labels, after[n_s:], target.labels, c)
    ratio = intra_class_edge_ratio(cg.inserted_array(), source.labels, target.labels, n_s)
    return ShiftStudy(tuple(d0), tuple(d1), int(ti.size), ratio)
