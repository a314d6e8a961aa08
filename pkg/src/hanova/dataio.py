"""CSV ingestion.

CSV is the only input format.  Factor columns are always treated as
categorical, even when they look numeric: levels are coded in
first-appearance order.
"""

from __future__ import annotations

import csv

from .design import Dataset
from .errors import EmptyFileError, MissingColumnError, UnparseableValueError


def read_csv(path, response: str, factors) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    ``response`` is parsed as real; each factor column becomes dense level
    codes.  Errors carry 1-based data row numbers.
    """
    factors = list(factors)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFileError(f"{path}: file is empty") from None
        col = {name: i for i, name in enumerate(header)}
        if response not in col:
            raise MissingColumnError(response)
        for f in factors:
            if f not in col:
                raise MissingColumnError(f)

        y: list[float] = []
        cols: dict[str, list[str]] = {f: [] for f in factors}
        needed = max([col[response]] + [col[f] for f in factors])
        for rownum, rec in enumerate(reader, start=1):
            if not rec or all(not field.strip() for field in rec):
                continue
            if len(rec) <= needed:
                raise UnparseableValueError(rownum, header[len(rec)], "<missing field>")
            raw = rec[col[response]].strip()
            try:
                y.append(float(raw))
            except ValueError:
                raise UnparseableValueError(rownum, response, raw) from None
            for f in factors:
                cols[f].append(rec[col[f]].strip())

    if not y:
        raise EmptyFileError(f"{path}: no data rows")
    return Dataset.from_columns(y, cols)
