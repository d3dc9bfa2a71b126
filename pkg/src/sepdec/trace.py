"""
Per-iteration run traces and their CSV form.

Every solver writes the same kind of CSV: a header line naming the columns
and one row per iteration. Missing values are written as empty fields and
read back as NaN, so `read_trace_csv` parses every trace regardless of the
solver that produced it.
"""

import csv
import dataclasses
import math

PFGD_COLUMNS = ("k", "t", "lambda", "g", "alpha", "sigma", "cF", "ms")
FAST_COLUMNS = ("k", "phase", "t", "lambda", "g", "alpha", "theta", "rho", "ms")
SWITCH_COLUMNS = ("k", "phase", "t", "lambda", "g", "alpha", "sigma", "cF", "theta", "rho", "ms")

_INT_COLUMNS = ("k", "phase")


@dataclasses.dataclass
class RunTrace:
    """
    Rows of per-iteration records.

    Attributes
    ----------
    solver : str
    columns : tuple of str
        Columns written to CSV. Rows may hold extra keys; those stay in
        memory only.
    rows : list of dict
    """

    solver: str
    columns: tuple
    rows: list = dataclasses.field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [r.get(name, math.nan) for r in self.rows]

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            write_rows(f, self.columns, self.rows)


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(f, columns, rows):
    w = csv.writer(f, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])


def read_trace_csv(path):
    """
    Read any CSV written by this package (traces, metric matrices and
    profiles). Numeric cells become floats, other cells stay strings.

    Returns
    -------
    RunTrace
        With ``solver`` set to the file path and columns from the header.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        rows = []
        for line in reader:
            row = {}
            for name, text in zip(header, line):
                if text == "":
                    row[name] = math.nan
                elif name in _INT_COLUMNS:
                    row[name] = int(text)
                else:
                    try:
                        row[name] = float(text)
                    except ValueError:
                        row[name] = text
            rows.append(row)
    return RunTrace(solver=str(path), columns=header, rows=rows)


@dataclasses.dataclass
class SolveResult:
    """
    Outcome of a solver run.

    ``status`` is "solved" when the stopping test passed and "failed" when
    the iteration budget ran out.
    """

    status: str
    y: object
    x: object
    t: float
    lam: float
    optim: float
    iterations: int
    trace: RunTrace
    oracle_calls: int = 0
    elapsed: float = 0.0
    info: dict = dataclasses.field(default_factory=dict)

    @property
    def solved(self):
        return self.status == "solved"
