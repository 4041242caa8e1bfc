"""Reading and validating the simulation CLI's CSV artifacts.

Two file shapes exist.  Experiment tables open with a schema-version
comment line ("# pondlab.<experiment>.v1") followed by a column header;
the step-trace export has no comment line, its first line is the fixed
column header itself.  Loaders here check the schema before touching
any data and fail loudly, quoting the offending header, on a mismatch.
"""

import csv


TRACE_HEADER = "step,ax,ay,bx,by,tau,runmax"


class TableError(ValueError):
    """A CSV file that cannot be drawn."""


class SchemaMismatch(TableError):
    """First line of the file is not the expected schema header."""


class NoDataRows(TableError):
    """Structurally valid file with nothing to draw."""


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def _rows_from(columns: list[str], data_lines: list[str], path: str):
    rows = []
    for rec in csv.reader(data_lines):
        if not rec:
            continue
        if len(rec) != len(columns):
            raise TableError(
                f"{path}: row {len(rows) + 1} has {len(rec)} cells, "
                f"header declares {len(columns)}")
        rows.append({c: _parse_cell(v) for c, v in zip(columns, rec)})
    if not rows:
        raise NoDataRows(f"{path}: no data rows")
    return rows


def load_experiment_table(path: str, schema: str) -> list[dict]:
    """Rows of a schema-tagged experiment CSV, cells parsed to numbers."""
    lines = _read_lines(path)
    first = lines[0] if lines else ""
    if first != schema:
        raise SchemaMismatch(
            f"{path}: expected schema header {schema!r}, file opens with "
            f"{first!r}")
    if len(lines) < 2:
        raise TableError(f"{path}: schema line without a column header")
    columns = next(csv.reader([lines[1]]))
    return _rows_from(columns, lines[2:], path)


def load_trace_table(path: str) -> list[dict]:
    """Rows of a step-trace export, cells parsed to numbers."""
    lines = _read_lines(path)
    first = lines[0] if lines else ""
    if first != TRACE_HEADER:
        raise SchemaMismatch(
            f"{path}: expected trace header {TRACE_HEADER!r}, file opens "
            f"with {first!r}")
    return _rows_from(first.split(","), lines[1:], path)
