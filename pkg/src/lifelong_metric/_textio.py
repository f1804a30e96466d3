"""Plain-text matrix format: ``rows cols`` header, then row-major values.

Values are written signed with 17 significant digits, so every entry has the
same width and a round trip is bit-exact.
"""

import numpy as np

from .exceptions import DataError


def format_matrix(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines.extend(" ".join(format(v, "+.16e") for v in row) for row in A)
    return "\n".join(lines) + "\n"


def parse_matrix(text, source="<matrix>"):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{source}: empty matrix")
    header = lines[0].split()
    if len(header) != 2:
        raise DataError(f"{source}: header must be 'rows cols'")
    rows, cols = int(header[0]), int(header[1])
    if len(lines) - 1 != rows:
        raise DataError(f"{source}: expected {rows} rows, found {len(lines) - 1}")
    A = np.zeros((rows, cols))
    for r, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != cols:
            raise DataError(f"{source}: row {r + 1} has {len(parts)} values, expected {cols}")
        try:
            A[r] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{source}: row {r + 1}: {exc}") from None
    return A
