"""Reading and writing the on-disk formats used by the command line.

Data files are CSV with a header whose first column is ``class``; matrices are
dense CSV with row and column headers, written with the shortest repr that
round-trips exactly. Configuration documents are JSON and
carry a ``spec_version`` key.
"""

import csv
import json
import os

import numpy as np

from .errors import InputError

SPEC_VERSION = 1


def fmt(v):
    """Shortest decimal string that parses back to the same float."""
    return repr(float(v))


class DataFormatError(InputError):
    """A file parsed but its content is malformed."""


def _open(path, mode="r"):
    return open(path, mode, newline="", encoding="utf-8")


def read_dataset(path):
    """Parse a class-labelled data file.

    Returns ``(names, labels, X)`` where ``labels`` is the list of distinct
    class labels in order of first appearance and ``X`` maps each label to its
    ``n_g x p`` sample matrix.
    """
    with _open(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "class":
            raise DataFormatError(f"{path}:1: expected first header column 'class', got "
                                  f"{header[0] if header else ''!r}")
        names = header[1:]
        if not names:
            raise DataFormatError(f"{path}:1: no variable columns")
        if len(set(names)) != len(names):
            raise DataFormatError(f"{path}:1: variable names must be unique")
        rows = {}
        for lineno, row in enumerate(reader, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(values)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            rows.setdefault(row[0].strip(), []).append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    labels = list(rows)
    return names, labels, {g: np.array(rows[g]) for g in labels}


def write_dataset(path, names, labels, X):
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"] + list(names))
        for g in labels:
            for row in X[g]:
                w.writerow([g] + [fmt(v) for v in row])


def write_matrix(path, M, names):
    M = np.asarray(M, dtype=float)
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + list(names))
        for nm, row in zip(names, M):
            w.writerow([nm] + [fmt(v) for v in row])


def read_matrix(path):
    """Dense matrix with row/column headers; returns ``(names, M)``."""
    with _open(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        names = [h.strip() for h in header[1:]]
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise DataFormatError(f"{path}:{lineno}: expected {len(names) + 1} fields")
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    M = np.array(rows)
    if M.shape != (len(names), len(names)):
        raise DataFormatError(f"{path}: matrix must be square with matching headers")
    return names, M


def read_edges(path, names):
    """Edge-list CSV ``j,k,sign,weight`` with vertex names; returns index tuples."""
    index = {nm: i for i, nm in enumerate(names)}
    edges = []
    with _open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"j", "k", "sign"} <= set(reader.fieldnames):
            raise DataFormatError(f"{path}:1: expected header with columns j,k,sign,weight")
        for lineno, row in enumerate(reader, 2):
            try:
                j, k = index[row["j"]], index[row["k"]]
            except KeyError as exc:
                raise DataFormatError(f"{path}:{lineno}: unknown vertex {exc.args[0]!r}") from None
            sign = -1 if row["sign"].strip() == "-" else 1
            try:
                weight = float(row.get("weight") or sign)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            edges.append((j, k, sign, weight))
    return edges


def read_config(path):
    """Load a JSON configuration document and check its ``spec_version``."""
    with _open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataFormatError(f"{path}: configuration must be a JSON object")
    version = doc.get("spec_version")
    if version != SPEC_VERSION:
        raise DataFormatError(f"{path}: unsupported spec_version {version!r} (expected {SPEC_VERSION})")
    return doc


def write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path in (None, "-"):
        print(text, end="")
        return
    with _open(path, "w") as fh:
        fh.write(text)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def safe_name(label):
    """Class label usable in a file name."""
    out = "".join(c if c.isalnum() or c in "-_." else "_" for c in str(label))
    return out or "class"


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
