"""Reading log-likelihood draws from text files and writing results.

Three input layouts are supported:

``matrix_csv``
    Rows are draws and columns are data points.  An optional header row is
    detected when the first row is not numeric; ``#`` lines are ignored.
``draws_csv``
    MCMC output with named columns.  Columns called ``prefix.3`` or
    ``prefix[3]`` are selected and ordered by their index.
``ndjson``
    One JSON object per draw with an array field named by the prefix.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import NoMatchingColumns, NonFinite, NonRectangular, ParseError
from .loglik import LogLikMatrix, validate_matrix

FORMATS = ("matrix_csv", "draws_csv", "ndjson")
DEFAULT_PREFIX = "log_lik"
CHAIN_COLUMNS = ("chain__", "chain", ".chain")


@dataclass(frozen=True)
class InputSpec:
    path: str
    format: str = "matrix_csv"
    column_prefix: str = DEFAULT_PREFIX

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown input format {self.format!r}; expected one of {FORMATS}")


def _number(text: str) -> float:
    # accept the typographic minus sign some tools emit
    return float(text.strip().replace("−", "-"))


def _is_numeric_row(row) -> bool:
    try:
        for cell in row:
            _number(cell)
    except ValueError:
        return False
    return True


def _csv_records(path) -> Iterator[tuple]:
    """Yield ``(line_number, cells)`` for non-blank, non-comment lines."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield reader.line_num, row


def _matrix_rows(path) -> Iterator[tuple]:
    """Yield ``(line_number, values)`` for the numeric rows of a matrix CSV."""
    width = None
    first = True
    for lineno, row in _csv_records(path):
        if first:
            first = False
            if not _is_numeric_row(row):
                width = len(row)
                continue
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise NonRectangular(f"expected {width} fields, found {len(row)}", lineno, path)
        try:
            values = [_number(c) for c in row]
        except ValueError:
            raise ParseError(f"non-numeric field in {row!r}", lineno, path) from None
        yield lineno, values


def parse_matrix_csv(path) -> LogLikMatrix:
    """Read a draws-by-points CSV into a validated matrix.

    Raises
    ------
    ParseError
        On a non-numeric field after the optional header, with its line.
    NonRectangular
        If rows have different lengths.
    NonFinite
        On NaN or infinite entries (0-based draw and point).
    """
    rows = [values for _, values in _matrix_rows(path)]
    if not rows:
        raise ParseError("no numeric rows", path=path)
    return validate_matrix(rows)


def _indexed_columns(header, prefix):
    pattern = re.compile(rf"^{re.escape(prefix)}(?:\.(\d+)|\[(\d+)\])$")
    picked = {}
    for pos, name in enumerate(header):
        match = pattern.match(name.strip())
        if match:
            idx = int(match.group(1) or match.group(2))
            if idx in picked:
                raise ParseError(f"column {prefix}[{idx}] appears twice")
            picked[idx] = pos
    return [picked[i] for i in sorted(picked)]


def parse_draws_csv(path, column_prefix: str = DEFAULT_PREFIX) -> LogLikMatrix:
    """Select the ``column_prefix`` columns of an MCMC output CSV.

    A chain identifier column (``chain__``, ``chain`` or ``.chain``), if
    present, is kept as ``chain_ids``.

    Raises
    ------
    NoMatchingColumns
        If no header column has the form ``prefix.i`` or ``prefix[i]``.
    ParseError
        On a missing header or unreadable values.
    """
    records = _csv_records(path)
    try:
        _, header = next(records)
    except StopIteration:
        raise ParseError("empty file; a header row is required", path=path) from None
    header = [h.strip() for h in header]
    try:
        cols = _indexed_columns(header, column_prefix)
    except ParseError as exc:
        raise ParseError(str(exc), 1, path) from None
    if not cols:
        raise NoMatchingColumns(f"no columns named {column_prefix}.i or {column_prefix}[i]",
                                path=path)
    chain_col = next((header.index(c) for c in CHAIN_COLUMNS if c in header), None)
    rows, chains = [], []
    for lineno, row in records:
        if len(row) != len(header):
            raise NonRectangular(f"expected {len(header)} fields, found {len(row)}", lineno, path)
        try:
            rows.append([_number(row[c]) for c in cols])
            if chain_col is not None:
                chains.append(row[chain_col].strip())
        except ValueError:
            raise ParseError("non-numeric log-likelihood value", lineno, path) from None
    if not rows:
        raise ParseError("no draws after the header", path=path)
    return validate_matrix(rows, chains if chain_col is not None else None)


def parse_ndjson(path, column_prefix: str = DEFAULT_PREFIX) -> LogLikMatrix:
    """Read one JSON object per line, taking the array in ``column_prefix``."""
    rows, chains = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno, path) from None
            if not isinstance(obj, dict) or column_prefix not in obj:
                raise NoMatchingColumns(f"no field {column_prefix!r}", lineno, path)
            vals = obj[column_prefix]
            if not isinstance(vals, list):
                raise ParseError(f"field {column_prefix!r} is not an array", lineno, path)
            if rows and len(vals) != len(rows[0]):
                raise NonRectangular(f"expected {len(rows[0])} values, found {len(vals)}",
                                     lineno, path)
            try:
                rows.append([float(v) for v in vals])
            except (TypeError, ValueError):
                raise ParseError("non-numeric log-likelihood value", lineno, path) from None
            chains.append(obj.get("chain"))
    if not rows:
        raise ParseError("no draws found", path=path)
    has_chain = all(c is not None for c in chains)
    return validate_matrix(rows, chains if has_chain else None)


def load_matrix(spec: InputSpec) -> LogLikMatrix:
    if spec.format == "matrix_csv":
        return parse_matrix_csv(spec.path)
    if spec.format == "draws_csv":
        return parse_draws_csv(spec.path, spec.column_prefix)
    return parse_ndjson(spec.path, spec.column_prefix)


def iter_csv_column_blocks(path, block_size: int) -> Iterator[np.ndarray]:
    """Stream a matrix CSV as ``(S, block_size)`` column blocks.

    The file is parsed once into a temporary binary file, which is then read
    back one block of columns at a time, so memory use is proportional to
    ``S * block_size`` rather than to the whole matrix.
    """
    if block_size < 1:
        raise ValueError(f"block_size must be positive, got {block_size}")
    fd, tmp = tempfile.mkstemp(suffix=".f64")
    try:
        S = n = 0
        with os.fdopen(fd, "wb") as out:
            for _, values in _matrix_rows(path):
                row = np.asarray(values, dtype=np.float64)
                bad = np.flatnonzero(~np.isfinite(row))
                if bad.size:
                    raise NonFinite(S, int(bad[0]))
                row.tofile(out)
                n = row.size
                S += 1
        if S == 0:
            raise ParseError("no numeric rows", path=path)
        mm = np.memmap(tmp, dtype=np.float64, mode="r", shape=(S, n))
        for start in range(0, n, block_size):
            yield np.array(mm[:, start:start + block_size])
        del mm
    finally:
        os.unlink(tmp)


def write_matrix_csv(path, values, header: bool = True) -> None:
    """Write an ``(S, n)`` matrix so that every value reads back exactly."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"{DEFAULT_PREFIX}.{i}" for i in range(1, values.shape[1] + 1)])
        for row in values:
            w.writerow([repr(float(v)) for v in row])


def read_strata(path) -> np.ndarray:
    """One stratum label per line; in a two-column file the last field."""
    labels = []
    for lineno, row in _csv_records(path):
        labels.append(row[-1].strip())
    if labels and labels[0].lower() in ("stratum", "strata", "group", "label"):
        labels = labels[1:]
    if not labels:
        raise ParseError("no stratum labels", path=path)
    return np.asarray(labels)


def _num(x) -> Optional[float]:
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _array(a):
    if a is None:
        return None
    return [_num(v) for v in np.asarray(a, dtype=float)]


# names of the three report rows for each estimator family
ROW_NAMES = {
    "psis_loo": ("elpd_loo", "p_loo", "looic"),
    "tis_loo": ("elpd_loo", "p_loo", "looic"),
    "is_loo": ("elpd_loo", "p_loo", "looic"),
    "waic": ("elpd_waic", "p_waic", "waic"),
    "kfold": ("elpd_kfold", "p_kfold", "kfoldic"),
}


def result_document(result, bootstrap_se: Optional[float] = None) -> dict:
    """JSON-ready description of an :class:`ElpdResult`.

    Floats are emitted by :mod:`json` with 17 significant digits, so they
    read back exactly.  Undefined numbers become ``null``.
    """
    elpd_name, p_name, ic_name = ROW_NAMES[result.method]
    se = result.se_total
    doc = {
        "method": result.method,
        "draw_count": result.draw_count,
        "point_count": result.point_count,
        "estimates": {
            elpd_name: {"estimate": _num(result.total), "se": _num(se)},
            p_name: {"estimate": _num(result.p_eff), "se": _num(result.se_p_eff)},
            ic_name: {"estimate": _num(result.ic_scale),
                      "se": None if se is None else _num(2.0 * se)},
        },
        "corrected": result.corrected,
        "options": result.options,
        "diagnostics": result.diagnostics,
        "pointwise": {
            elpd_name: _array(result.elpd),
            p_name: _array(result.p_pointwise),
        },
    }
    if result.k_hats.size:
        doc["pointwise"]["k_hat"] = _array(result.k_hats)
    if bootstrap_se is not None:
        doc["bootstrap_se"] = _num(bootstrap_se)
    return doc


def dump_json(doc, path=None) -> str:
    text = json.dumps(doc, indent=2, allow_nan=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
