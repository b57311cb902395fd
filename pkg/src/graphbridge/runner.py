"""Turn an ExperimentConfig into files on disk: training runs, result dumps and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import csbm as C
from . import model as M
from . import trainer as T
from .config import ExperimentConfig
from .datasets import FLOAT_FMT, load_checkpoint, load_dataset, load_manifest, save_checkpoint
from .errors import ValidationError
from .graphstore import SOURCE, TARGET, Graph, apply_insertions, combine, symmetric_normalize
from .metrics import accuracy, auroc, center_distance, domain_similarity, intra_class_edge_ratio

METRICS_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.json"
EDGES_FILE = "inserted_edges.csv"
CHECKPOINT_FILE = "checkpoint.npz"


def load_domains(exp: ExperimentConfig) -> tuple[Graph, Graph]:
    """Source and target graphs: dataset manifests are read, CSBM domains are generated."""
    graphs = {}
    generated = None
    for name, dom in ((SOURCE, exp.source), (TARGET, exp.target)):
        if dom.dataset is not None:
            graphs[name] = load_dataset(load_manifest(exp.dataset_path(dom)), domain=name)
        else:
            if generated is None:
                generated = C.generate_shift_pair(exp.csbm_spec())
            graphs[name] = generated[0] if name == SOURCE else generated[1]
    return graphs[SOURCE], graphs[TARGET]


def _jsonable(x):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, allow_nan=False)


def summary_dict(exp: ExperimentConfig, result: T.FitResult) -> dict:
    final, best = result.final, result.best
    st = result.state
    return {
        "label": exp.label,
        "config": exp.resolved(),
        "seed": exp.train.seed,
        "data_seed": exp.data_seed,
        "prng": T.PRNG_NAME,
        "epochs_run": len(result.history),
        "final": None if final is None else final.to_dict(),
        "best": None if best is None else best.to_dict(),
        "candidate_table": None if st.table is None else {
            "k": st.table.k,
            "similarity_evaluations": st.table.similarity_evaluations,
            "digest": st.table.digest(),
            "builds": st.candidate_builds,
        },
        "params_digest": M.params_digest(result.params),
        "node_counts": {SOURCE: result.graph.source.node_count, TARGET: result.graph.target.node_count},
    }


def _embedding_rows(ids_offset, domain_code, labels, preds, h):
    n = h.shape[0]
    lab = np.full(n, -1) if labels is None else labels
    return np.column_stack([np.arange(n) + ids_offset, np.full(n, domain_code), lab, preds, h])


def write_embeddings(directory: Path, result: T.FitResult) -> None:
    """embeddings_{source,target,combined}.csv: node id, domain, label (-1 unknown), predicted label, embedding."""
    h_s, h_t, h_ct = result.embeddings()
    cg = result.graph
    pred = {key: M.classify(result.params, h).value.argmax(axis=1) for key, h in (("s", h_s), ("t", h_t), ("c", h_ct))}
    width = h_s.shape[1]
    header = "node_id,domain,label,predicted," + ",".join(f"e{i}" for i in range(width))
    fmt = ["%d", "%d", "%d", "%d"] + [FLOAT_FMT] * width
    for name, code, offset, labels, p, h in (
        ("source", 0, 0, cg.source.labels, pred["s"], h_s),
        ("target", 1, cg.offset, cg.target.labels, pred["t"], h_t),
        ("combined", 1, cg.offset, cg.target.labels, pred["c"], h_ct),
    ):
        rows = _embedding_rows(offset, code, labels, p, h)
        np.savetxt(directory / f"embeddings_{name}.csv", rows, fmt=fmt, delimiter=",", header=header, comments="")


def write_edge_log(directory: Path, edge_log: list) -> None:
    rows = np.vstack(edge_log) if edge_log else np.zeros((0, 5))
    np.savetxt(
        directory / EDGES_FILE, rows, fmt=["%d", "%d", "%d", FLOAT_FMT, "%d"], delimiter=",",
        header=",".join(T.EDGE_LOG_COLUMNS), comments="",
    )


def emit_results(exp: ExperimentConfig, result: T.FitResult, directory) -> Path:
    """Write metrics.jsonl, summary.json, the three embedding dumps, the edge log and a final checkpoint."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / METRICS_FILE, "w") as fh:
            for rec in result.history:
                fh.write(dumps(rec.to_dict()) + "\n")
        (directory / SUMMARY_FILE).write_text(json.dumps(_jsonable(summary_dict(exp, result)), sort_keys=True, indent=2) + "\n")
        write_embeddings(directory, result)
        write_edge_log(directory, result.state.edge_log)
        save_checkpoint(
            directory / CHECKPOINT_FILE, result.params, seed=exp.train.seed, epoch=len(result.history),
            inserted=result.graph.inserted_array(), config=exp.resolved(),
        )
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write results to {directory}: {exc.strerror}") from exc
    return directory


def read_metrics(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_experiment(exp: ExperimentConfig, directory=None, *, graphs=None) -> T.FitResult:
    """Train under ``exp`` and emit results to ``directory`` (defaults to ``exp.out``)."""
    directory = Path(exp.out if directory is None else directory)
    source, target = graphs if graphs is not None else load_domains(exp)
    every = exp.train.checkpoint_every

    def on_epoch(state, record):
        if every and (state.epoch % every == 0):
            save_checkpoint(
                directory / "checkpoints" / f"epoch_{state.epoch:05d}.npz", state.params,
                seed=exp.train.seed, epoch=state.epoch, inserted=state.graph.inserted_array(), config=exp.resolved(),
            )

    result = T.fit(source, target, exp.train, on_epoch=on_epoch)
    emit_results(exp, result, directory)
    return result


@dataclass
class Evaluation:
    target_accuracy: float | None
    target_auroc: float | None
    inserted_edge_count: int
    intra_class_edge_ratio: float | None
    center_distance: list
    domain_similarity: float | None
    inserted_pair_similarity: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate(params: dict, source: Graph, target: Graph, inserted=None) -> Evaluation:
    """Target metrics for fixed parameters on the combined graph carrying ``inserted`` edges."""
    if source.feature_dim != target.feature_dim or params["W1"].shape[0] != source.feature_dim:
        raise ValidationError("checkpoint feature width does not match the datasets")
    cg = combine(source, target)
    if inserted is not None and len(inserted):
        inserted = np.asarray(inserted, dtype=np.float64)
        # (source global, target global, weight) rows as stored by the checkpoint
        cg._set_inserted(inserted[:, 0].astype(np.int64), inserted[:, 1].astype(np.int64), inserted[:, 2])
        if cg.inserted_target.max() >= cg.node_count or cg.inserted_source.max() >= cg.offset:
            raise ValidationError("checkpoint edges do not fit the datasets")
    h_s = M.encoder_forward(params, symmetric_normalize(source.adjacency), source.features).value
    h_c = M.encoder_forward(params, symmetric_normalize(cg.combined_adjacency), cg.features).value
    h_ct = h_c[cg.offset :]
    probs = M.classify(params, h_ct).value
    pred = probs.argmax(axis=1)
    acc = auc = ratio = None
    if target.labels is not None:
        acc = accuracy(pred, target.labels)
        if probs.shape[1] == 2 and np.unique(target.labels).size == 2:
            auc = auroc(probs[:, 1], target.labels)
        ratio = intra_class_edge_ratio(cg.inserted_array(), source.labels, target.labels, cg.offset)
    dom, pair = domain_similarity(h_s, h_ct, cg.inserted_array(), h_c)
    dist = center_distance(h_s, source.labels, h_ct, pred, probs.shape[1]) if source.labels is not None else []
    return Evaluation(acc, auc, cg.num_inserted, ratio, dist, dom, pair)


def evaluate_checkpoint(path, source: Graph, target: Graph) -> Evaluation:
    params, inserted, _ = load_checkpoint(path)
    return evaluate(params, source, target, inserted)
