"""Pre-training, the adaptation loop, and its ablation variants."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import bridger
from . import losses as L
from . import model as M
from . import numkernel as nk
from .errors import NumericError, TrainingError, ValidationError
from .graphstore import CombinedGraph, Graph, apply_insertions, combine, symmetric_normalize
from .metrics import MetricsRecord, accuracy, auroc, center_distance, domain_similarity, intra_class_edge_ratio
from .numkernel import AdamState, SparseMatrix, Tape

log = logging.getLogger(__name__)

MODES = ("full", "gcn_da", "random_link", "no_mi")
PRNG_NAME = "numpy.random.PCG64"

# rng stream ids within an epoch
_STREAM_EDGE_NEG, _STREAM_NODE_NEG, _STREAM_RANDOM_LINK = 1, 2, 3


@dataclass
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-3
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    threshold: float = 0.94
    k: int = 50
    tau: float = 0.3
    edge_negatives: int = 1
    node_negatives: int = 5
    pretrain_epochs: int = 100
    hidden: tuple = (128, 64)
    seed: int = 0
    label_fraction: float = 1.0
    mode: str = "full"
    accumulate_edges: bool = False
    include_inserted_in_ra: bool = False
    stop_grad_mi: bool = False
    random_link_budget: object = None  # None, int, or per-epoch list of ints
    checkpoint_every: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 < self.threshold < 1.0:
            raise ValidationError("threshold t must lie in (0, 1)")
        if self.k < 1:
            raise ValidationError("K must be at least 1")
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        for name in ("lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise ValidationError("label_fraction must lie in (0, 1]")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValidationError("epoch counts must be non-negative")
        if self.lr <= 0:
            raise ValidationError("learning rate must be positive")
        if self.edge_negatives < 1 or self.node_negatives < 1:
            raise ValidationError("negative counts must be at least 1")
        if len(self.hidden) != 2:
            raise ValidationError("hidden must list two layer widths")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def field_names(cls) -> set:
        return {f.name for f in fields(cls)}


def epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


def stratified_label_mask(labels, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Keep ``fraction`` of each class (at least one node per class)."""
    labels = np.asarray(labels)
    mask = np.zeros(labels.size, dtype=bool)
    if fraction >= 1.0:
        mask[:] = True
        return mask
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n_keep = max(1, int(round(fraction * idx.size)))
        mask[np.sort(rng.choice(idx, size=n_keep, replace=False))] = True
    return mask


# ---------------------------------------------------------------------------
# One objective evaluation
# ---------------------------------------------------------------------------


@dataclass
class EpochInputs:
    """Everything the objective needs besides the parameters (all constants)."""

    adj_source: SparseMatrix
    adj_target: SparseMatrix
    adj_combined: SparseMatrix
    x_source: np.ndarray
    x_target: np.ndarray
    labels_source: np.ndarray
    label_mask: np.ndarray
    ra_anchors: np.ndarray | None = None
    ra_neighbors: np.ndarray | None = None
    ra_negatives: np.ndarray | None = None
    mi_negatives: np.ndarray | None = None

    @property
    def x_combined(self) -> np.ndarray:
        return np.vstack([self.x_source, self.x_target])

    @property
    def offset(self) -> int:
        return self.x_source.shape[0]


def objective(params, inp: EpochInputs, cfg: TrainConfig):
    """Return (LossBundle, EmbeddingSet) for one forward pass under ``cfg.mode``."""
    h_s = M.encoder_forward(params, inp.adj_source, inp.x_source)
    h_t = M.encoder_forward(params, inp.adj_target, inp.x_target)
    l_clf = L.loss_clf(M.classify(params, h_s), inp.labels_source, inp.label_mask)
    if cfg.mode == "gcn_da":
        # no insertions ever happen, so the combined view of target nodes is H^T itself
        emb = M.EmbeddingSet(h_s, h_t, nk.vstack([h_s, h_t]))
        l_ent = L.loss_entropy(M.classify(params, h_t))
        return L.total_objective(l_clf, l_ent, None, None, cfg.lambda1, cfg.lambda2, cfg.lambda3), emb

    h_c = M.encoder_forward(params, inp.adj_combined, inp.x_combined)
    emb = M.EmbeddingSet(h_s, h_t, h_c)
    h_ct = emb.combined_target_rows()

    l_mi = None
    if cfg.mode != "no_mi":
        l_mi = L.loss_mi(h_ct, h_t, inp.mi_negatives, cfg.tau, stop_gradient=cfg.stop_grad_mi)

    l_ent = L.loss_entropy(M.classify(params, h_ct))

    l_ra = None
    if cfg.mode != "random_link":
        z = M.predictor_embed(params, h_c)
        emb.z_combined = z
        pos = M.pair_scores(z, inp.ra_anchors, inp.ra_neighbors)
        anchors_rep = np.repeat(inp.ra_anchors[:, None], inp.ra_negatives.shape[1], axis=1)
        neg = M.pair_scores(z, anchors_rep, inp.ra_negatives)
        l_ra = L.loss_ra(pos, neg, inp.ra_anchors)

    bundle = L.total_objective(l_clf, l_ent, l_ra, l_mi, cfg.lambda1, cfg.lambda2, cfg.lambda3)
    return bundle, emb


# ---------------------------------------------------------------------------
# Training state
# ---------------------------------------------------------------------------


EDGE_LOG_COLUMNS = ("epoch", "target", "source", "weight", "same_class")


@dataclass
class TrainState:
    params: dict
    adam: AdamState
    graph: CombinedGraph
    table: bridger.CandidateTable | None
    pretrained: dict
    adj_source: SparseMatrix
    adj_target: SparseMatrix
    label_mask: np.ndarray
    pretrained_source: np.ndarray | None = None
    pretrained_target: np.ndarray | None = None
    epoch: int = 0
    history: list = field(default_factory=list)
    edge_log: list = field(default_factory=list)  # per-epoch arrays, see EDGE_LOG_COLUMNS
    predictor_evaluations: list = field(default_factory=list)
    candidate_builds: int = 0


def _check_finite(value, what, epoch):
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {what} at epoch {epoch}")


def pretrain_encoder(source: Graph, target: Graph, config: TrainConfig, params=None, label_mask=None) -> dict:
    """Supervised source-only warm start of the encoder and classifier."""
    if source.labels is None:
        raise ValidationError("pre-training needs source labels")
    if params is None:
        params = M.init_params(source.feature_dim, int(source.labels.max()) + 1, config.hidden, config.seed)
    if label_mask is None:
        label_mask = source.label_mask if source.label_mask is not None else np.ones(source.node_count, dtype=bool)
    adj = symmetric_normalize(source.adjacency)
    adam = AdamState(lr=config.lr)
    for epoch in range(config.pretrain_epochs):
        tape = Tape()
        p = tape.watch(params)
        loss = L.loss_clf(M.classify(p, M.encoder_forward(p, adj, source.features)), source.labels, label_mask)
        _check_finite(float(loss.value), "pre-training loss", epoch)
        grads = tape.backward(loss)
        try:
            params, adam = nk.adam_step(params, grads, adam)
        except NumericError as exc:
            raise TrainingError(f"pre-training diverged at epoch {epoch}: {exc}") from exc
    return params


def ra_pairs(adj: SparseMatrix):
    """Directed (anchor, neighbour) pairs of every stored edge."""
    rows, cols, _ = adj.triplets()
    return rows, cols


def init_state(source: Graph, target: Graph, config: TrainConfig) -> TrainState:
    """Pre-train, then build the candidate table once (skipped for gcn_da)."""
    if source.labels is None:
        raise ValidationError("source graph needs labels")
    cg = combine(source, target)
    mask_rng = np.random.default_rng([config.seed, 0xA5])
    label_mask = stratified_label_mask(source.labels, config.label_fraction, mask_rng)
    pretrained = pretrain_encoder(source, target, config, label_mask=label_mask)
    adj_s = symmetric_normalize(source.adjacency)
    adj_t = symmetric_normalize(target.adjacency)
    state = TrainState(
        params=dict(pretrained),
        adam=AdamState(lr=config.lr),
        graph=cg,
        table=None,
        pretrained=pretrained,
        adj_source=adj_s,
        adj_target=adj_t,
        label_mask=label_mask,
    )
    if config.mode != "gcn_da":
        hs = M.encoder_forward(pretrained, adj_s, source.features).value
        ht = M.encoder_forward(pretrained, adj_t, target.features).value
        state.pretrained_source, state.pretrained_target = hs, ht
        state.table = bridger.build_candidate_table(hs, ht, config.k, built_from=M.params_digest(pretrained))
        state.candidate_builds += 1
    return state


def _epoch_inputs(state: TrainState, config: TrainConfig, adj_combined: SparseMatrix) -> EpochInputs:
    cg = state.graph
    inp = EpochInputs(
        adj_source=state.adj_source,
        adj_target=state.adj_target,
        adj_combined=adj_combined,
        x_source=cg.source.features,
        x_target=cg.target.features,
        labels_source=cg.source.labels,
        label_mask=state.label_mask,
    )
    if config.mode == "gcn_da":
        return inp
    n_t = cg.target.node_count
    inp.mi_negatives = bridger.sample_node_negatives_batch(
        n_t, np.arange(n_t), config.node_negatives, epoch_rng(config.seed, state.epoch, _STREAM_NODE_NEG)
    )
    if config.mode != "random_link":
        ra_adj = cg.combined_adjacency if config.include_inserted_in_ra else cg.base_adjacency
        anchors, neighbors = ra_pairs(ra_adj)
        inp.ra_anchors, inp.ra_neighbors = anchors, neighbors
        inp.ra_negatives = bridger.sample_edge_negatives_batch(
            ra_adj, anchors, config.edge_negatives, epoch_rng(config.seed, state.epoch, _STREAM_EDGE_NEG)
        )
    return inp


def _random_link_budget(config: TrainConfig, epoch: int):
    b = config.random_link_budget
    if b is None or isinstance(b, int):
        return b
    return int(b[epoch]) if epoch < len(b) else int(b[-1])


def train_epoch(state: TrainState, config: TrainConfig):
    """Forward, loss, Adam update, then re-score candidates and rebuild the cross-domain edges."""
    cg = state.graph
    adj_c = symmetric_normalize(cg.combined_adjacency)
    inp = _epoch_inputs(state, config, adj_c)

    tape = Tape()
    p = tape.watch(state.params)
    bundle, _ = objective(p, inp, config)
    _check_finite(bundle.total, "total loss", state.epoch)
    grads = tape.backward(bundle.total_tensor)
    try:
        state.params, state.adam = nk.adam_step(state.params, grads, state.adam)
    except NumericError as exc:
        raise TrainingError(f"epoch {state.epoch}: {exc}") from exc

    # post-update embeddings on this epoch's graph
    params = state.params
    h_s = M.encoder_forward(params, state.adj_source, cg.source.features).value
    if config.mode == "gcn_da":
        h_ct = M.encoder_forward(params, state.adj_target, cg.target.features).value
        h_c = np.vstack([h_s, h_ct])
    else:
        h_c = M.encoder_forward(params, adj_c, inp.x_combined).value
        h_ct = h_c[cg.offset :]

    evaluations = 0
    if config.mode in ("full", "no_mi"):
        z = M.predictor_embed(params, h_c).value
        scored = bridger.score_and_select(z, state.table, config.threshold, offset=cg.offset)
        evaluations = scored.evaluations
        apply_insertions(cg, scored.accepted_arrays(), config.threshold, accumulate=config.accumulate_edges)
    elif config.mode == "random_link":
        chosen = bridger.random_insert_baseline(
            state.pretrained_source,
            state.pretrained_target,
            config.threshold,
            epoch_rng(config.seed, state.epoch, _STREAM_RANDOM_LINK),
            budget=_random_link_budget(config, state.epoch),
            candidates=state.table,
        )
        apply_insertions(cg, chosen, config.threshold, accumulate=config.accumulate_edges)
    state.predictor_evaluations.append(evaluations)

    record = _metrics(state, config, bundle, h_s, h_ct, h_c, evaluations)
    state.edge_log.append(_edge_log_rows(cg, state.epoch))
    state.history.append(record)
    state.epoch += 1
    return state, record


def _edge_log_rows(cg: CombinedGraph, epoch: int) -> np.ndarray:
    """One row per inserted edge: epoch, target id, source id, weight, same-class flag (-1 if unknown)."""
    tgt = cg.inserted_target - cg.offset
    src = cg.inserted_source
    same = np.full(src.size, -1.0)
    if cg.target.labels is not None:
        same = (cg.source.labels[src] == cg.target.labels[tgt]).astype(np.float64)
    return np.column_stack([np.full(src.size, epoch), tgt, src, cg.inserted_weight, same]).reshape(-1, 5)


def _metrics(state, config, bundle, h_s, h_ct, h_c, evaluations) -> MetricsRecord:
    cg = state.graph
    probs = M.classify(state.params, h_ct).value
    pred = probs.argmax(axis=1)
    acc = auc = ratio = None
    if cg.target.labels is not None:
        acc = accuracy(pred, cg.target.labels)
        if probs.shape[1] == 2 and len(np.unique(cg.target.labels)) == 2:
            auc = auroc(probs[:, 1], cg.target.labels)
    inserted = cg.inserted_array()
    if cg.target.labels is not None:
        ratio = intra_class_edge_ratio(inserted, cg.source.labels, cg.target.labels, cg.offset)
    dom, pair = domain_similarity(h_s, h_ct, inserted, h_c)
    n_cls = state.params["bc"].shape[0]
    return MetricsRecord(
        epoch=state.epoch,
        target_accuracy=acc,
        target_auroc=auc,
        losses={k: v for k, v in bundle.as_dict().items()},
        inserted_edge_count=cg.num_inserted,
        inserted_edges_per_node=cg.num_inserted / cg.target.node_count,
        intra_class_edge_ratio=ratio,
        center_distance=center_distance(h_s, cg.source.labels, h_ct, pred, n_cls),
        domain_similarity=dom,
        inserted_pair_similarity=pair,
        predictor_evaluations=evaluations,
    )


@dataclass
class FitResult:
    params: dict
    history: list
    graph: CombinedGraph
    state: TrainState

    @property
    def final(self) -> MetricsRecord | None:
        return self.history[-1] if self.history else None

    @property
    def best(self) -> MetricsRecord | None:
        scored = [r for r in self.history if r.target_accuracy is not None]
        if not scored:
            return None
        return max(scored, key=lambda r: (r.target_accuracy, -r.epoch))

    def embeddings(self):
        """(H_S, H_T, H^C_T) under the final parameters and final graph."""
        st = self.state
        cg = self.graph
        h_s = M.encoder_forward(self.params, st.adj_source, cg.source.features).value
        h_t = M.encoder_forward(self.params, st.adj_target, cg.target.features).value
        adj_c = symmetric_normalize(cg.combined_adjacency)
        h_c = M.encoder_forward(self.params, adj_c, cg.features).value
        return h_s, h_t, h_c[cg.offset :]


def fit(source: Graph, target: Graph, config: TrainConfig, on_epoch=None) -> FitResult:
    """Pre-train, pre-select candidates, then run ``config.epochs`` adaptation epochs."""
    if source.feature_dim != target.feature_dim:
        raise ValidationError("source and target feature dimensions differ")
    state = init_state(source, target, config)
    for _ in range(config.epochs):
        state, record = train_epoch(state, config)
        log.debug("epoch %d acc=%s total=%.5f edges=%d", record.epoch, record.target_accuracy, record.losses["total"], record.inserted_edge_count)
        if on_epoch is not None:
            on_epoch(state, record)
    return FitResult(state.params, state.history, state.graph, state)


def with_mode(config: TrainConfig, mode: str, **overrides) -> TrainConfig:
    return replace(config, mode=mode, **overrides)
