"""CSV ingestion, run configuration and the JSON model document."""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .earlywarn import Node, WarningTree
from .pipeline import FittedIPL
from .polycore import CenterSet, KernelModel, MinMaxScaling, SparsePolynomial
from .solver import FitReport
from .timeseries import LagSpec, RawSeries, direction_series

FORMAT_NAME = "ipl-model"
FORMAT_VERSION = 1


class InputError(ValueError):
    """Malformed input file, configuration or column layout (exit code 2)."""


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a UTF-8 CSV; CRLF/LF and quoted fields are fine."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InputError(f"{path}: file is empty") from None
            header = [h.strip() for h in header]
            if not any(header):
                raise InputError(f"{path}: missing header row")
            rows = []
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise InputError(
                        f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                    )
                rows.append(row)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, rows


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path_or_fh, header, rows) -> None:
    """Write rows with shortest round-trip float formatting and LF endings."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])

    if hasattr(path_or_fh, "write"):
        emit(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


@dataclass(frozen=True)
class ColumnRoles:
    features: tuple
    target: str
    timestamp: Optional[str] = None
    direction_k: Optional[int] = None
    stride: int = 1


def _column(header, rows, name, path, numeric=True):
    if name not in header:
        raise InputError(f"{path}: missing column {name!r}")
    j = header.index(name)
    if not numeric:
        return [r[j].strip() for r in rows]
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        try:
            out[i] = float(r[j])
        except ValueError:
            raise InputError(f"{path}: data row {i + 1}, column {name!r}: not a number: {r[j]!r}") from None
    return out


def infer_roles(header, target: str, timestamp: Optional[str] = None, features=None, **kw) -> ColumnRoles:
    if features is None:
        features = tuple(h for h in header if h not in (target, timestamp))
    if not features:
        raise InputError("no feature columns")
    return ColumnRoles(tuple(features), target, timestamp, **kw)


def load_series(path, roles: ColumnRoles, require_target: bool = True) -> RawSeries:
    """Read a CSV into a series according to ``roles``.

    Applies the stride subsample, then direction labelling when
    ``roles.direction_k`` is set.  A missing target column is tolerated
    (filled with zeros) only when ``require_target`` is false; a missing
    timestamp column is always tolerated.
    """
    header, rows = read_csv(path)
    missing = [c for c in roles.features if c not in header]
    if require_target and roles.target not in header:
        missing.append(roles.target)
    if missing:
        raise InputError(f"{path}: missing columns: {', '.join(missing)}")
    X = np.column_stack([_column(header, rows, c, path) for c in roles.features])
    if roles.target in header:
        y = _column(header, rows, roles.target, path)
    else:
        y = np.zeros(len(rows))
    ts = None
    # without the timestamp column, row order defines time
    if roles.timestamp and roles.timestamp in header:
        raw = _column(header, rows, roles.timestamp, path, numeric=False)
        for conv in (int, float, str):
            try:
                ts = tuple(conv(v) for v in raw)
                break
            except ValueError:
                continue
    try:
        series = RawSeries(X, y, roles.features, roles.target, ts)
        if roles.stride > 1:
            series = series.slice(0, None, roles.stride)
        if roles.direction_k:
            series = direction_series(series, roles.direction_k)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return series


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Every tunable of a run; loaded from ``key = value`` files and flags."""

    loss: str = "squared"
    degree: int = 2
    lx: int = 0
    ly: int = 0
    threshold: float = 0.0
    centers: str = "first"
    center_seed: Optional[int] = None
    scale: bool = True
    method: str = "auto"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    target: str = "y"
    timestamp: Optional[str] = None
    features: Optional[str] = None
    direction_k: Optional[int] = None
    stride: int = 1
    split: Optional[str] = None
    seed: Optional[int] = None
    alphas: str = "0,0.25,0.5,0.75,1"
    trials: int = 10
    k_values: str = "1..15"
    metric: str = "auc"
    depth: int = 2
    pool_size: int = 3
    min_leaf: int = 5
    top_k: int = 20
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.loss not in ("squared", "hinge", "logistic"):
            raise InputError(f"loss must be squared, hinge or logistic, got {self.loss!r}")
        if self.centers not in ("first", "uniform", "subsample"):
            raise InputError(f"centers must be first, uniform or subsample, got {self.centers!r}")
        if self.method not in ("auto", "pinv", "admm"):
            raise InputError(f"method must be auto, pinv or admm, got {self.method!r}")
        if self.metric not in ("auc", "accuracy"):
            raise InputError("metric must be auc or accuracy")
        for name in ("degree", "stride", "trials", "pool_size", "min_leaf", "top_k", "threads", "max_iters"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        for name in ("lx", "ly", "depth"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.degree > 20:
            raise InputError("degree above 20 is not supported")
        if self.threshold < 0 or math.isnan(self.threshold):
            raise InputError("threshold must be non-negative")
        if self.direction_k is not None and self.direction_k < 1:
            raise InputError("direction_k must be >= 1")
        if self.loss == "squared" and self.direction_k is not None:
            raise InputError("direction targets need the hinge or logistic loss")
        return self

    def update(self, **overrides) -> "RunConfig":
        known = {f.name for f in fields(self)}
        for key, value in overrides.items():
            if key not in known:
                raise InputError(f"unknown configuration key {key!r}")
            if value is not None:
                setattr(self, key, _coerce(key, value))
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if not isinstance(value, str):
        return value
    text = value.strip()
    if "Optional" in kind and text.lower() in ("", "none", "null"):
        return None
    try:
        if "bool" in kind:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if "int" in kind:
            return int(text)
        if "float" in kind:
            return float(text)
    except ValueError:
        raise InputError(f"configuration key {key!r}: cannot parse {value!r}") from None
    return text


def load_config(path) -> RunConfig:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    for num, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {num}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _TYPES:
            raise InputError(f"{path}: line {num}: unknown configuration key {key!r}")
        values[key] = value
    return RunConfig().update(**values)


def parse_int_list(text: str) -> list[int]:
    """``"1..5"``, ``"1,3,7"`` or a mix such as ``"1..3,8"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise InputError(f"cannot parse integer list {text!r}") from None
    if not out:
        raise InputError("empty integer list")
    return out


def parse_float_list(text: str) -> list[float]:
    try:
        out = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise InputError(f"cannot parse number list {text!r}") from None
    if not out:
        raise InputError("empty number list")
    return out


# ---------------------------------------------------------------------------
# Model document
# ---------------------------------------------------------------------------


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _tree_to_dict(node: Node) -> dict:
    if node.is_leaf:
        return {"label": node.label}
    return {
        "label": node.label,
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _tree_to_dict(node.left),
        "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(d: dict) -> Node:
    if "feature" not in d:
        return Node(int(d["label"]))
    return Node(
        int(d["label"]),
        feature=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=_tree_from_dict(d["left"]),
        right=_tree_from_dict(d["right"]),
    )


def creation_time() -> str:
    """UTC timestamp, pinned by ``SOURCE_DATE_EPOCH`` for reproducible files."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (
        _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
        if epoch
        else _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    )
    return when.isoformat()


@dataclass
class ModelBundle:
    fitted: FittedIPL
    roles: ColumnRoles
    tree: Optional[WarningTree] = None
    created: str = ""
    config: dict = field(default_factory=dict)


def model_to_dict(bundle: ModelBundle) -> dict:
    fitted, model = bundle.fitted, bundle.fitted.model
    lag = model.lag_spec or LagSpec()
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "created": bundle.created or creation_time(),
        "degree": model.degree,
        "loss": model.loss,
        "lag_spec": {"lx": lag.lx, "ly": lag.ly},
        "columns": dataclasses.asdict(bundle.roles),
        "feature_names": list(model.feature_names),
        "scaling": None
        if model.scaling is None
        else {"lo": model.scaling.lo.tolist(), "hi": model.scaling.hi.tolist()},
        "centers": {
            "strategy": model.centers.strategy,
            "seed": model.centers.seed,
            "matrix": model.centers.centers.tolist(),
        },
        "weights": model.weights.tolist(),
        "sparse": {
            "threshold": fitted.sparse.threshold,
            "terms": [{"exponents": list(a), "coefficient": c} for a, c in fitted.sparse.terms],
        },
        "fit_report": {k: _clean(v) for k, v in fitted.report.summary().items()},
        "config": bundle.config,
        "tree": None,
    }
    doc["columns"]["features"] = list(bundle.roles.features)
    if bundle.tree is not None:
        doc["tree"] = {
            "depth": bundle.tree.depth,
            "pool_names": list(bundle.tree.pool_names),
            "pool_indices": [list(a) for a in bundle.tree.pool_indices],
            "root": _tree_to_dict(bundle.tree.root),
        }
    return doc


def save_model(path, bundle: ModelBundle) -> None:
    text = json.dumps(model_to_dict(bundle), indent=1, allow_nan=False)
    try:
        Path(path).write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc


def model_from_dict(doc: dict) -> ModelBundle:
    if doc.get("format") != FORMAT_NAME:
        raise InputError("not an IPL model document")
    if doc.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported model format version {doc.get('version')!r}")
    try:
        lag = LagSpec(**doc["lag_spec"])
        scaling = None
        if doc["scaling"] is not None:
            scaling = MinMaxScaling(np.array(doc["scaling"]["lo"], float), np.array(doc["scaling"]["hi"], float))
        c = doc["centers"]
        centers = CenterSet(np.array(c["matrix"], float), c["strategy"], c["seed"])
        names = tuple(doc["feature_names"])
        model = KernelModel(doc["degree"], centers, np.array(doc["weights"], float), names, doc["loss"], scaling, lag)
        sp = doc["sparse"]
        sparse = SparsePolynomial(
            tuple((tuple(t["exponents"]), float(t["coefficient"])) for t in sp["terms"]),
            doc["degree"],
            names,
            float(sp["threshold"]),
            scaling,
        )
        rep = doc.get("fit_report") or {}
        report = FitReport(
            iterations=int(rep.get("iterations", 0)),
            primal_residual=float(rep.get("primal_residual") or 0.0),
            dual_residual=float(rep.get("dual_residual") or 0.0),
            converged=bool(rep.get("converged", True)),
            objective_trace=np.array([rep["objective"]]) if rep.get("objective") is not None else np.array([]),
            primal_trace=np.array([]),
            dual_trace=np.array([]),
            method=rep.get("method", "admm"),
            alpha=float(rep["alpha"]) if rep.get("alpha") is not None else float("nan"),
            beta=float(rep["beta"]) if rep.get("beta") is not None else float("nan"),
        )
        cols = doc["columns"]
        roles = ColumnRoles(tuple(cols["features"]), cols["target"], cols.get("timestamp"),
                            cols.get("direction_k"), int(cols.get("stride", 1)))
        tree = None
        if doc.get("tree"):
            t = doc["tree"]
            tree = WarningTree(_tree_from_dict(t["root"]), int(t["depth"]), tuple(t["pool_names"]),
                               tuple(tuple(a) for a in t["pool_indices"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model document: {exc}") from exc
    return ModelBundle(FittedIPL(model, sparse, report), roles, tree, doc.get("created", ""), doc.get("config", {}))


def load_model(path) -> ModelBundle:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return model_from_dict(doc)
