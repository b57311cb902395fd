"""Experiment configuration: YAML text in, fully resolved dataclasses out.

Layout::

    run:    {label: demo, out: runs/demo}
    csbm:   {dim: 16, p_intra: 0.08, p_inter: 0.02, separation: 1.0, seed: null}
    source: {csbm: {class_counts: [300, 100], shift: 0.0, std: 1.0}}   # or {dataset: manifest.yaml}
    target: {csbm: {class_counts: [100, 300], shift: 0.5, std: 1.0}}
    train:  {epochs: 300, lr: 0.001, ...}                              # any TrainConfig field
    sweep:  {lambda1: grid}                                            # or an explicit list

Every section may be left out or empty. A domain holds exactly one of
``csbm`` or ``dataset``; with neither it falls back to the CSBM defaults.
"""

from __future__ import annotations

import copy
import itertools
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from . import csbm as C
from .errors import ConfigError, ValidationError
from .graphstore import SOURCE, TARGET
from .trainer import TrainConfig

LAMBDA_GRID = (1e-3, 1e-1, 1.0, 10.0, 100.0)

CSBM_DEFAULTS = {"dim": 16, "p_intra": 0.08, "p_inter": 0.02, "separation": 1.0, "seed": None}
DOMAIN_CSBM_DEFAULTS = {
    SOURCE: {"class_counts": [300, 100], "shift": 0.0, "std": 1.0},
    TARGET: {"class_counts": [100, 300], "shift": 0.5, "std": 1.0},
}
RUN_DEFAULTS = {"label": "run", "out": "runs"}
SECTIONS = ("run", "csbm", SOURCE, TARGET, "train", "sweep")


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "1e-3" as a string; accept exponent floats without a dot
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$|^[-+]?(?:[0-9][0-9_]*)\.[0-9_]*$|^[-+]?\.[0-9_]+$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


@dataclass
class DomainSource:
    """Where one domain's graph comes from: a dataset manifest or CSBM parameters."""

    dataset: str | None = None
    csbm: dict | None = None

    def __post_init__(self):
        if (self.dataset is None) == (self.csbm is None):
            raise ConfigError("a domain needs exactly one of 'dataset' or 'csbm'")

    def to_dict(self) -> dict:
        return {"dataset": self.dataset} if self.dataset is not None else {"csbm": dict(self.csbm)}


@dataclass
class ExperimentConfig:
    source: DomainSource
    target: DomainSource
    train: TrainConfig
    csbm: dict = field(default_factory=lambda: dict(CSBM_DEFAULTS))
    label: str = "run"
    out: str = "runs"
    base_dir: Path = field(default=Path("."), repr=False)

    @property
    def data_seed(self) -> int:
        s = self.csbm.get("seed")
        return self.train.seed if s is None else int(s)

    def resolved(self) -> dict:
        """Every setting materialised. The output directory is left out so reruns elsewhere match bitwise."""
        shared = dict(self.csbm)
        shared["seed"] = self.data_seed
        return {
            "run": {"label": self.label},
            "csbm": shared,
            SOURCE: self._domain_dict(self.source),
            TARGET: self._domain_dict(self.target),
            "train": self.train.to_dict(),
        }

    def dataset_path(self, dom: DomainSource) -> Path:
        return (Path(self.base_dir) / dom.dataset).resolve()

    def _domain_dict(self, dom: DomainSource) -> dict:
        return {"dataset": str(self.dataset_path(dom))} if dom.dataset is not None else dom.to_dict()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, seed=int(seed)))

    def with_mode(self, mode: str, **overrides) -> "ExperimentConfig":
        return replace(self, train=replace(self.train, mode=mode, **overrides))

    def csbm_spec(self) -> C.CsbmSpec:
        src = self.source.csbm or DOMAIN_CSBM_DEFAULTS[SOURCE]
        tgt = self.target.csbm or DOMAIN_CSBM_DEFAULTS[TARGET]
        if len(src["class_counts"]) != len(tgt["class_counts"]):
            raise ConfigError("source and target CSBM sections list different numbers of classes")
        k = len(src["class_counts"])
        means = C.class_means(k, self.csbm["dim"], self.csbm["separation"])
        return C.CsbmSpec(
            num_classes=k,
            dim=self.csbm["dim"],
            p_intra=self.csbm["p_intra"],
            p_inter=self.csbm["p_inter"],
            source=C.DomainSpec(src["class_counts"], means + src["shift"], (src["std"],) * k),
            target=C.DomainSpec(tgt["class_counts"], means + tgt["shift"], (tgt["std"],) * k),
            seed=self.data_seed,
        )


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        where = f"section '{section}'" if section else "top level"
        raise ConfigError(f"unknown key '{unknown[0]}' in {where}")


def _expect(section, key, value, kind):
    ok = {
        "int": isinstance(value, int) and not isinstance(value, bool),
        "float": isinstance(value, (int, float)) and not isinstance(value, bool),
        "bool": isinstance(value, bool),
        "str": isinstance(value, str),
    }[kind]
    if not ok:
        raise ConfigError(f"{section}.{key} must be {kind}, got {type(value).__name__} {value!r}")
    return float(value) if kind == "float" else value


def _train_kind(default):
    if isinstance(default, bool):
        return "bool"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, str):
        return "str"
    return None


_TRAIN_DEFAULTS = TrainConfig().to_dict()


def _train_section(doc: dict) -> dict:
    _check_keys("train", doc, _TRAIN_DEFAULTS)
    out = {}
    for key, value in doc.items():
        kind = _train_kind(_TRAIN_DEFAULTS[key])
        if kind is not None:
            out[key] = _expect("train", key, value, kind)
        elif key == "hidden":
            if not (isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
                raise ConfigError(f"train.hidden must be a list of two integers, got {value!r}")
            out[key] = tuple(value)
        elif key == "random_link_budget":
            if value is not None and not isinstance(value, int) and not (isinstance(value, list) and all(isinstance(v, int) for v in value)):
                raise ConfigError("train.random_link_budget must be null, an integer or a list of integers")
            out[key] = value
    for name in ("lambda1", "lambda2", "lambda3"):
        if name in out and out[name] < 0:
            raise ConfigError(f"train.{name} must be non-negative, got {out[name]}")
    return out


def _csbm_shared(doc: dict) -> dict:
    _check_keys("csbm", doc, CSBM_DEFAULTS)
    out = dict(CSBM_DEFAULTS)
    for key, value in doc.items():
        if key == "seed":
            out[key] = None if value is None else _expect("csbm", key, value, "int")
        elif key == "dim":
            out[key] = _expect("csbm", key, value, "int")
        else:
            out[key] = _expect("csbm", key, value, "float")
    return out


def _domain(name: str, doc) -> DomainSource:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    _check_keys(name, doc, ("dataset", "csbm"))
    if "dataset" in doc and "csbm" in doc:
        raise ConfigError(f"section '{name}' sets both 'dataset' and 'csbm'; choose one")
    if "dataset" in doc:
        return DomainSource(dataset=_expect(name, "dataset", doc["dataset"], "str"))
    sub = doc.get("csbm") or {}
    _check_keys(f"{name}.csbm", sub, DOMAIN_CSBM_DEFAULTS[name])
    spec = copy.deepcopy(DOMAIN_CSBM_DEFAULTS[name])
    for key, value in sub.items():
        if key == "class_counts":
            if not (isinstance(value, list) and value and all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value)):
                raise ConfigError(f"{name}.csbm.class_counts must be a list of positive integers")
            spec[key] = list(value)
        else:
            spec[key] = _expect(f"{name}.csbm", key, value, "float")
    return DomainSource(csbm=spec)


def _load_doc(text: str) -> dict:
    try:
        doc = yaml.load(text, Loader=_Loader)  # noqa: S506 - SafeLoader subclass
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of sections")
    # a summary.json from an earlier run carries its resolved config
    if "config" in doc and "prng" in doc:
        doc = doc["config"]
    return doc


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    """Parse one experiment; any ``sweep`` section is ignored here (see :func:`expand_sweep`)."""
    doc = _load_doc(text)
    _check_keys("", doc, SECTIONS)
    for sec in SECTIONS:
        if doc.get(sec) is not None and not isinstance(doc[sec], dict):
            raise ConfigError(f"section '{sec}' must be a mapping")
    run = doc.get("run") or {}
    _check_keys("run", run, RUN_DEFAULTS)
    try:
        train = TrainConfig(**_train_section(doc.get("train") or {}))
        return ExperimentConfig(
            source=_domain(SOURCE, doc.get(SOURCE)),
            target=_domain(TARGET, doc.get(TARGET)),
            train=train,
            csbm=_csbm_shared(doc.get("csbm") or {}),
            label=str(run.get("label", RUN_DEFAULTS["label"])),
            out=str(run.get("out", RUN_DEFAULTS["out"])),
            base_dir=Path(base_dir),
        )
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text, base_dir=path.parent)


def sweep_grid(text: str) -> dict:
    """The ``sweep`` section as {train key: list of values}; ``grid`` means the standard λ grid."""
    sweep = _load_doc(text).get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("section 'sweep' must be a mapping")
    _check_keys("sweep", sweep, _TRAIN_DEFAULTS)
    grid = {}
    for key, values in sweep.items():
        if values == "grid":
            values = list(LAMBDA_GRID)
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{key} must be a non-empty list or 'grid'")
        grid[key] = values
    return grid


def expand_sweep(text: str, base_dir=".") -> list:
    """One ExperimentConfig per point of the sweep grid (cartesian product, keys in file order)."""
    base = parse_config(text, base_dir)
    grid = sweep_grid(text)
    if not grid:
        return [base]
    runs = []
    keys = list(grid)
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = _train_section(dict(zip(keys, combo)))
        try:
            train = replace(base.train, **overrides)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc
        label = base.label + "_" + "_".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in zip(keys, combo))
        runs.append(replace(base, train=train, label=label))
    return runs
