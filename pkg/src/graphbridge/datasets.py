"""Plain-text dataset files and parameter checkpoints.

A dataset is three text files plus a small manifest:

* edges: ``src<TAB>dst`` integer pairs, 0-indexed, one per line
* features: comma-separated reals, one node per line in id order
* labels (optional): one integer per line
* manifest (YAML): node count and the three file names, relative to itself
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import model as M
from .errors import DataFormatError, ValidationError
from .graphstore import SOURCE, Graph, build_graph

FLOAT_FMT = "%.17g"  # shortest format that round-trips every float64


@dataclass(frozen=True)
class DatasetBundle:
    edges: Path
    features: Path
    labels: Path | None = None
    num_nodes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", Path(self.edges))
        object.__setattr__(self, "features", Path(self.features))
        if self.labels is not None:
            object.__setattr__(self, "labels", Path(self.labels))


def _lines(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(path, 0, f"cannot read file: {exc.strerror}") from exc
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line:
            yield no, line


def read_edges(path) -> np.ndarray:
    path = Path(path)
    out = []
    for no, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(path, no, f"expected 'src<TAB>dst', got {line!r}")
        try:
            out.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DataFormatError(path, no, f"non-integer endpoint in {line!r}") from None
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def read_features(path) -> np.ndarray:
    path = Path(path)
    rows, width = [], None
    for no, line in _lines(path):
        try:
            row = [float(x) for x in line.split(",")]
        except ValueError:
            raise DataFormatError(path, no, "non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(path, no, f"row has {len(row)} values, expected {width}")
        if not np.all(np.isfinite(row)):
            raise DataFormatError(path, no, "non-finite feature value")
        rows.append(row)
    if not rows:
        raise DataFormatError(path, 0, "feature file is empty")
    return np.array(rows, dtype=np.float64)


def read_labels(path) -> np.ndarray:
    path = Path(path)
    out = []
    for no, line in _lines(path):
        try:
            out.append(int(line))
        except ValueError:
            raise DataFormatError(path, no, f"label {line!r} is not an integer") from None
    return np.array(out, dtype=np.int64)


def load_dataset(bundle: DatasetBundle, domain: str = SOURCE) -> Graph:
    features = read_features(bundle.features)
    n = features.shape[0]
    if bundle.num_nodes is not None and n != bundle.num_nodes:
        raise ValidationError(f"{bundle.features}: {n} feature rows but {bundle.num_nodes} nodes declared")
    labels = None
    if bundle.labels is not None:
        labels = read_labels(bundle.labels)
        if labels.size != n:
            raise ValidationError(f"{bundle.labels}: {labels.size} labels for {n} nodes")
    return build_graph(n, read_edges(bundle.edges), features, labels, domain=domain)


def load_manifest(path) -> DatasetBundle:
    path = Path(path)
    doc = yaml.safe_load(path.read_text()) or {}
    unknown = set(doc) - {"edges", "features", "labels", "num_nodes"}
    if unknown:
        raise ValidationError(f"{path}: unknown manifest key(s) {sorted(unknown)}")
    base = path.parent
    labels = doc.get("labels")
    return DatasetBundle(base / doc["edges"], base / doc["features"], None if labels is None else base / labels, doc.get("num_nodes"))


def export_dataset(graph: Graph, directory, name: str) -> Path:
    """Write ``graph`` as edges/features/labels files plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges = f"{name}_edges.tsv"
    feats = f"{name}_features.csv"
    np.savetxt(directory / edges, graph.edge_list(), fmt="%d", delimiter="\t")
    np.savetxt(directory / feats, graph.features, fmt=FLOAT_FMT, delimiter=",")
    manifest = {"num_nodes": graph.node_count, "edges": edges, "features": feats}
    if graph.labels is not None:
        manifest["labels"] = f"{name}_labels.txt"
        np.savetxt(directory / manifest["labels"], graph.labels, fmt="%d")
    out = directory / f"{name}.yaml"
    out.write_text(yaml.safe_dump(manifest, sort_keys=True))
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: dict, *, seed: int, epoch: int, inserted: np.ndarray | None = None, config: dict | None = None):
    """npz with one array per parameter, the inserted-edge array and a JSON header."""
    header = {
        "seed": int(seed),
        "epoch": int(epoch),
        "shapes": {k: list(np.shape(v)) for k, v in params.items()},
        "digest": M.params_digest(params),
        "config": config or {},
    }
    arrays = {f"param_{k}": np.asarray(v) for k, v in params.items()}
    arrays["inserted"] = np.zeros((0, 3)) if inserted is None else np.asarray(inserted, dtype=np.float64).reshape(-1, 3)
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Return (params, inserted (E, 3), header dict); shapes are checked against the header."""
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        params = {k[len("param_") :]: z[k].copy() for k in z.files if k.startswith("param_")}
        inserted = z["inserted"].copy()
    for k, shape in header["shapes"].items():
        if k not in params or list(params[k].shape) != shape:
            raise ValidationError(f"checkpoint parameter {k} does not match its recorded shape {shape}")
    if M.params_digest(params) != header["digest"]:
        raise ValidationError("checkpoint parameters do not match their digest")
    return params, inserted, header
