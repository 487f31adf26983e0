"""Dataset directory format, run configuration, checkpoints and reports.

A dataset directory contains:

    meta.json      {"name", "num_nodes", "num_features", "num_classes",
                    "features_file"}
    edges.tsv      one undirected edge per line, "u<TAB>v" with u < v
    features.csv   N rows of comma-separated floats (9 significant digits), or
    features.f32   N*d little-endian float32, row-major
    labels.csv     one integer per line, -1 = unlabeled
    splits.json    optional {"ratios": [...], "splits": [{"train": ...}, ...]}

Features are stored at single precision; 9 significant decimal digits
round-trip float32 exactly, so save -> load -> save is byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .evaluate import SplitSet
from .graph import SparseGraph, build_graph, check_features, check_labels
from .model import AMLPConfig, AMLPModel
from .reconstruct import ReconstructionConfig

META_FILE = "meta.json"
FLOAT_FMT = "%.9g"

_RUN_CONFIG_KEYS = {
    "k",
    "lambda",
    "hidden_dim",
    "learning_rate",
    "epochs",
    "seed",
    "eps_norm",
    "early_stop",
    "epsilon",
    "candidate_policy",
    "mode",
    "steepness",
    "kmeans_restarts",
    "n_seeds",
    "output",
}

_GRID_KEYS = ("k", "lambda", "learning_rate")


@dataclass
class RunConfig:
    """Flat bag of pipeline settings; k / lambda / learning_rate may be lists,
    in which case the trainer runs the grid."""

    k: int | list = 3
    lambda_: float | list = 0.1
    hidden_dim: int = 500
    learning_rate: float | list = 1e-3
    epochs: int = 200
    seed: int = 0
    eps_norm: float = 1e-12
    early_stop: bool = False
    epsilon: float = 0.001
    candidate_policy: str = "original_edges"
    mode: str = "hard"
    steepness: float = 100.0
    kmeans_restarts: int = 10
    n_seeds: int = 1
    output: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - _RUN_CONFIG_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "lambda" in kwargs:
            kwargs["lambda_"] = kwargs.pop("lambda")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(raw, dict):
            raise ValidationError(f"{path}: config must be a JSON object")
        return cls.from_dict(raw)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "lambda": self.lambda_,
            "hidden_dim": self.hidden_dim,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "eps_norm": self.eps_norm,
            "early_stop": self.early_stop,
            "epsilon": self.epsilon,
            "candidate_policy": self.candidate_policy,
            "mode": self.mode,
            "steepness": self.steepness,
            "kmeans_restarts": self.kmeans_restarts,
            "n_seeds": self.n_seeds,
            "output": self.output,
        }

    def grid(self) -> list[tuple["AMLPConfig", "ReconstructionConfig"]]:
        """Expand list-valued keys into the cartesian product of settings."""
        def as_list(v):
            return list(v) if isinstance(v, (list, tuple)) else [v]

        combos = []
        for k in as_list(self.k):
            for lam in as_list(self.lambda_):
                for lr in as_list(self.learning_rate):
                    combos.append(
                        (
                            AMLPConfig(
                                k=int(k),
                                lambda_=float(lam),
                                hidden_dim=self.hidden_dim,
                                learning_rate=float(lr),
                                epochs=self.epochs,
                                seed=self.seed,
                                eps_norm=self.eps_norm,
                                early_stop=self.early_stop,
                            ),
                            ReconstructionConfig(
                                epsilon=self.epsilon,
                                candidate_policy=self.candidate_policy,
                                mode=self.mode,
                                steepness=self.steepness,
                            ),
                        )
                    )
        return combos

    def is_grid(self) -> bool:
        return any(isinstance(getattr(self, a), (list, tuple)) for a in ("k", "lambda_", "learning_rate"))


# ---------------------------------------------------------------------------
# Dataset directories
# ---------------------------------------------------------------------------


def save_dataset(
    path,
    graph: SparseGraph,
    x: np.ndarray,
    labels: np.ndarray,
    name: str = "dataset",
    features_file: str = "features.csv",
    splits: SplitSet | None = None,
) -> None:
    """Write a dataset directory (see module docstring for the layout)."""
    if features_file not in ("features.csv", "features.f32"):
        raise ValidationError("features_file must be features.csv or features.f32")
    x = check_features(x, graph.n_nodes)
    labels = check_labels(labels, graph.n_nodes)
    num_classes = int(labels.max()) + 1 if (labels >= 0).any() else 0
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": name,
        "num_nodes": graph.n_nodes,
        "num_features": int(x.shape[1]),
        "num_classes": num_classes,
        "features_file": features_file,
    }
    (path / META_FILE).write_text(json.dumps(meta, indent=2) + "\n")
    edges = graph.edge_array()
    with open(path / "edges.tsv", "w") as f:
        for u, v in edges:
            f.write(f"{u}\t{v}\n")
    x32 = x.astype(np.float32)
    if features_file == "features.csv":
        with open(path / "features.csv", "w") as f:
            for row in x32:
                f.write(",".join(FLOAT_FMT % val for val in row) + "\n")
    else:
        (path / "features.f32").write_bytes(x32.astype("<f4").tobytes(order="C"))
    with open(path / "labels.csv", "w") as f:
        for lab in labels:
            f.write(f"{lab}\n")
    if splits is not None:
        (path / "splits.json").write_text(json.dumps(splits.as_dict()) + "\n")


def parse_int_lines(path, n_cols: int) -> np.ndarray:
    """Whitespace-separated integer rows; errors carry file and line number."""
    rows = []
    path = Path(path)
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n_cols:
                raise ValidationError(
                    f"{path}:{lineno}: expected {n_cols} fields, got {len(parts)}"
                )
            try:
                rows.append([int(p) for p in parts])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not an integer: {line!r}")
    return np.asarray(rows, dtype=np.int64).reshape(-1, n_cols)


def load_float_csv(path) -> np.ndarray:
    """Comma-separated float rows; errors carry file and line number."""
    path = Path(path)
    try:
        return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        # slow path only to point at the offending line
        width = None
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                parts = line.strip().split(",")
                try:
                    [float(p) for p in parts if p != ""]
                except ValueError:
                    raise ValidationError(f"{path}:{lineno}: malformed float row")
                if width is not None and len(parts) != width:
                    raise ValidationError(
                        f"{path}:{lineno}: expected {width} fields, got {len(parts)}"
                    )
                width = len(parts)
        raise ValidationError(f"{path}: malformed feature file")


def _load_features_csv(path: Path, n_nodes: int, n_features: int) -> np.ndarray:
    x = load_float_csv(path)
    if x.shape != (n_nodes, n_features):
        raise ValidationError(
            f"{path}: feature shape {x.shape} does not match meta "
            f"({n_nodes}, {n_features})"
        )
    # features are float32 at rest; the 9-digit text uniquely identifies the
    # float32 value, so recover it before promoting back to float64
    return x.astype(np.float32).astype(np.float64)


def load_dataset(path):
    """Load and validate a dataset directory.

    Returns (SparseGraph, features, labels, SplitSet | None). Counts are
    checked against meta.json; malformed lines are reported with file and
    line number.
    """
    path = Path(path)
    meta_path = path / META_FILE
    if not meta_path.is_file():
        raise ValidationError(f"{meta_path}: missing")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{meta_path}: invalid JSON ({e})") from e
    for key in ("name", "num_nodes", "num_features", "num_classes", "features_file"):
        if key not in meta:
            raise ValidationError(f"{meta_path}: missing key {key!r}")
    n = int(meta["num_nodes"])
    d = int(meta["num_features"])
    edges = parse_int_lines(path / "edges.tsv", 2)
    try:
        graph = build_graph(edges, n)
    except ValidationError as e:
        raise ValidationError(f"{path / 'edges.tsv'}: {e}") from e
    feat_file = meta["features_file"]
    if feat_file == "features.csv":
        x = _load_features_csv(path / "features.csv", n, d)
    elif feat_file == "features.f32":
        raw = (path / "features.f32").read_bytes()
        if len(raw) != 4 * n * d:
            raise ValidationError(
                f"{path / 'features.f32'}: {len(raw)} bytes, expected {4 * n * d}"
            )
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n, d)
    else:
        raise ValidationError(f"{meta_path}: unknown features_file {feat_file!r}")
    labels = parse_int_lines(path / "labels.csv", 1).ravel()
    if labels.size != n:
        raise ValidationError(
            f"{path / 'labels.csv'}: {labels.size} labels, expected {n}"
        )
    if (labels >= 0).any() and labels.max() >= max(int(meta["num_classes"]), 1):
        raise ValidationError(
            f"{path / 'labels.csv'}: label {labels.max()} exceeds num_classes "
            f"{meta['num_classes']}"
        )
    splits = None
    splits_path = path / "splits.json"
    if splits_path.is_file():
        raw = json.loads(splits_path.read_text())
        splits = SplitSet(
            splits=[
                (
                    np.asarray(s["train"], dtype=np.int64),
                    np.asarray(s["val"], dtype=np.int64),
                    np.asarray(s["test"], dtype=np.int64),
                )
                for s in raw["splits"]
            ],
            ratios=tuple(raw["ratios"]),
        )
    return graph, x, labels, splits


def load_meta(path) -> dict:
    meta_path = Path(path) / META_FILE
    if not meta_path.is_file():
        raise ValidationError(f"{meta_path}: missing")
    return json.loads(meta_path.read_text())


# ---------------------------------------------------------------------------
# Embeddings, checkpoints, reports
# ---------------------------------------------------------------------------


def save_embeddings_csv(path, y_hat: np.ndarray) -> None:
    """N x c CSV at 9 significant digits (float32 at rest, like features)."""
    with open(path, "w") as f:
        for row in np.asarray(y_hat, dtype=np.float32):
            f.write(",".join(FLOAT_FMT % val for val in row) + "\n")


def load_embeddings_csv(path) -> np.ndarray:
    try:
        x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise ValidationError(f"{path}: malformed embeddings CSV ({e})") from e
    return x.astype(np.float32).astype(np.float64)


def save_checkpoint(dir_path, model: AMLPModel) -> None:
    """JSON header (dimensions, config, seed) plus the weights as CSV.

    Weights use 17 significant digits so a reload restores the exact float64
    matrix.
    """
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    d, c = model.W.shape
    header = {
        "d": d,
        "c": c,
        "config": model.config.as_dict(),
        "seed": model.config.seed,
        "weights_file": "weights.csv",
    }
    (dir_path / "checkpoint.json").write_text(json.dumps(header, indent=2) + "\n")
    with open(dir_path / "weights.csv", "w") as f:
        for row in model.W:
            f.write(",".join("%.17g" % val for val in row) + "\n")


def load_checkpoint(dir_path) -> AMLPModel:
    dir_path = Path(dir_path)
    header = json.loads((dir_path / "checkpoint.json").read_text())
    w = np.loadtxt(dir_path / header["weights_file"], delimiter=",", ndmin=2)
    if w.shape != (header["d"], header["c"]):
        raise ValidationError(
            f"{dir_path}: weight shape {w.shape} does not match header"
        )
    cfg_raw = dict(header["config"])
    cfg_raw["lambda_"] = cfg_raw.pop("lambda")
    return AMLPModel(W=w, config=AMLPConfig(**cfg_raw))


def make_report(config: dict, seed, metrics: dict, wall_clock_seconds: float, **extra) -> dict:
    """Schema for every JSON run report: config echo, seed, metrics, wall-clock."""
    report = {
        "config": config,
        "seed": seed,
        "metrics": metrics,
        "wall_clock_seconds": wall_clock_seconds,
    }
    report.update(extra)
    return report


def write_report(path, report: dict) -> None:
    for key in ("config", "seed", "metrics", "wall_clock_seconds"):
        if key not in report:
            raise ValidationError(f"report missing schema key {key!r}")
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
