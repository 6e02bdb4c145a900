"""JSON model specifications and CSV ingestion."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .design import Basis, Block, DesignSpec, RescalePolicy, ThresholdMode, encode_factor, factor_levels
from .errors import ConfigurationError, IngestionError
from .thresholding import SolverConfig
from .variance import SigmaEstimator


@dataclass
class Table:
    """Columns of a CSV file kept as strings, with the source path for messages."""

    columns: dict
    path: str = "<memory>"

    @property
    def n_rows(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name):
        if name not in self.columns:
            raise IngestionError(f"{self.path}: no column named {name!r} (have {', '.join(self.columns)})",
                                 column=name)
        return self.columns[name]

    def numeric(self, name):
        out = np.empty(self.n_rows)
        for i, v in enumerate(self.column(name)):
            try:
                out[i] = float(v)
            except ValueError:
                out[i] = math.nan
            if not math.isfinite(out[i]):
                # rows are file line numbers; the header is line 1
                raise IngestionError(f"{self.path}: not a finite number: {v!r}",
                                     row=i + 2, column=name)
        return out


def read_csv(path):
    """Read a UTF-8 CSV with a header row; every row must have the header's width."""
    path = str(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    rows = [r for r in rows if r]
    if not rows:
        raise IngestionError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise IngestionError(f"{path}: header must hold distinct non-empty names", row=1)
    cols = {h: [] for h in header}
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise IngestionError(f"{path}: {len(row)} fields, expected {len(header)}", row=line)
        for h, v in zip(header, row):
            cols[h].append(v.strip())
    if not rows[1:]:
        raise IngestionError(f"{path}: no data rows")
    return Table(cols, path)


@dataclass
class ModelSpecFile:
    data: str
    response: str
    blocks: list
    nuisance: list = field(default_factory=lambda: ["intercept"])
    alpha: float = 0.05
    seed: int = 0
    mc_reps: int = 10_000
    rescale_reps: Optional[int] = None
    s: float = 1.0
    rescale: RescalePolicy = RescalePolicy.QUANTILE
    sigma: SigmaEstimator = field(default_factory=SigmaEstimator.unbiased)
    basis: Basis = Basis.ORTHONORMAL
    base_dir: Path = Path(".")

    @property
    def data_path(self):
        p = Path(self.data)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def solver(self):
        return SolverConfig(s=self.s)

    def build(self, table=None):
        """Assemble the design from the data file (or an already loaded table)."""
        table = table or read_csv(self.data_path)
        y = table.numeric(self.response)
        A = _nuisance_matrix(self.nuisance, table)
        blocks = []
        for b in self.blocks:
            mode = ThresholdMode(b["mode"])
            if "factor" in b:
                labels = table.column(b["factor"])
                levels = factor_levels(labels)
                X = encode_factor(labels, levels)
                names = tuple(f"{b['factor']}={lv}" for lv in levels)
            else:
                X = np.column_stack([table.numeric(c) for c in b["columns"]])
                names = tuple(b["columns"])
            blocks.append(Block(b["name"], X, mode, names))
        return DesignSpec(A, blocks, y)


def _nuisance_matrix(terms, table):
    cols = []
    intercept = False
    for t in terms:
        if t == "intercept":
            cols.append(np.ones(table.n_rows))
            intercept = True
        elif "continuous" in t:
            cols.append(table.numeric(t["continuous"]))
        else:
            X = encode_factor(table.column(t["factor"]))
            # drop the reference level whenever another term already spans the constant
            cols.extend((X[:, 1:] if intercept or len(cols) else X).T)
            intercept = True
    return np.column_stack(cols) if cols else None


_KEYS = {"data", "response", "nuisance", "blocks", "alpha", "seed", "mc_reps", "rescale_reps", "s", "rescale",
         "sigma", "basis"}


def _require(cond, msg):
    if not cond:
        raise ConfigurationError(msg)


def _check_nuisance(terms):
    _require(isinstance(terms, list), "'nuisance' must be a list")
    for t in terms:
        ok = t == "intercept" or (
            isinstance(t, dict) and len(t) == 1 and next(iter(t)) in ("continuous", "factor")
            and isinstance(next(iter(t.values())), str)
        )
        _require(ok, f"nuisance term {t!r} must be 'intercept', {{'continuous': col}} or {{'factor': col}}")


def _check_blocks(blocks):
    _require(isinstance(blocks, list) and blocks, "'blocks' must be a non-empty list")
    names = set()
    for b in blocks:
        _require(isinstance(b, dict) and isinstance(b.get("name"), str), f"block {b!r} needs a string 'name'")
        _require(b["name"] not in names, f"duplicate block name {b['name']!r}")
        names.add(b["name"])
        _require(("columns" in b) != ("factor" in b), f"block {b['name']!r} needs exactly one of 'columns' or 'factor'")
        if "columns" in b:
            _require(isinstance(b["columns"], list) and b["columns"] and all(isinstance(c, str) for c in b["columns"]),
                     f"block {b['name']!r}: 'columns' must be a non-empty list of names")
        else:
            _require(isinstance(b["factor"], str), f"block {b['name']!r}: 'factor' must be a column name")
        _require(b.get("mode") in ("block", "coordinate"), f"block {b['name']!r}: mode must be 'block' or 'coordinate'")
        extra = set(b) - {"name", "columns", "factor", "mode"}
        _require(not extra, f"block {b['name']!r}: unknown keys {sorted(extra)}")


def parse_model_spec(text, base_dir=".", source="<spec>"):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    _require(isinstance(raw, dict), f"{source}: top level must be an object")
    unknown = set(raw) - _KEYS
    _require(not unknown, f"{source}: unknown keys {sorted(unknown)}")
    for key in ("data", "response", "blocks"):
        _require(key in raw, f"{source}: missing required key {key!r}")
    _require(isinstance(raw["data"], str) and isinstance(raw["response"], str),
             f"{source}: 'data' and 'response' must be strings")
    _check_nuisance(raw.get("nuisance", ["intercept"]))
    _check_blocks(raw["blocks"])

    def number(key, default, kind=float):
        v = raw.get(key, default)
        _require(v is None or (isinstance(v, (int, float)) and not isinstance(v, bool)),
                 f"{source}: {key!r} must be a number")
        if kind is int and v is not None:
            _require(float(v).is_integer(), f"{source}: {key!r} must be an integer")
            v = int(v)
        return v

    alpha = number("alpha", 0.05)
    _require(0 < alpha < 1, f"{source}: alpha must lie in (0, 1), got {alpha}")
    try:
        rescale = RescalePolicy(raw.get("rescale", "quantile"))
        basis = Basis(raw.get("basis", "orthonormal"))
    except ValueError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return ModelSpecFile(
        data=raw["data"],
        response=raw["response"],
        blocks=raw["blocks"],
        nuisance=raw.get("nuisance", ["intercept"]),
        alpha=alpha,
        seed=number("seed", 0, int),
        mc_reps=number("mc_reps", 10_000, int),
        rescale_reps=number("rescale_reps", None, int),
        s=number("s", 1.0),
        rescale=rescale,
        sigma=SigmaEstimator.parse(raw.get("sigma", "unbiased")),
        basis=basis,
        base_dir=Path(base_dir),
    )


def load_model_spec(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    return parse_model_spec(text, path.parent, str(path))
