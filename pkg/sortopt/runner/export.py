"""CSV exports for plotting and analysis tools.

Floats are written with repr() so every exported value reads back exactly.
"""
import csv
import logging

from ..plant.metrics import normalized_rates
from ..plant.params import FIELDS

log = logging.getLogger(__name__)

LEDGER_COLUMNS = FIELDS + (
    "tp_n_mean",
    "tn_n_mean",
    "tp_n_var",
    "tn_n_var",
    "timestamp",
    "intervals",
    "tp",
    "fn",
    "fp",
    "tn",
)
SURFACE_COLUMNS = FIELDS + ("tp_n_mean", "tn_n_mean", "tp_n_var", "tn_n_var")
POSTERIOR_COLUMNS = ("noise_weight",) + FIELDS + ("mean", "variance")
BOXPLOT_COLUMNS = ("record",) + FIELDS + ("interval", "tp_n", "tn_n")
VARIANCE_COLUMNS = ("interval_s", "variance", "buckets")
WEIGHT_COLUMNS = ("w_accept", "w_reject", "status", "steps") + FIELDS + ("tp_n_mean", "tn_n_mean")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return value


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(columns)
        count = 0
        for row in rows:
            writer.writerow([_cell(value) for value in row])
            count += 1
    log.debug(f"wrote {count} rows to {path}")
    return count


def ledger_rows(records):
    for record in records:
        confusion = record.confusion
        yield tuple(record.params) + (
            record.tp_n_mean,
            record.tn_n_mean,
            record.tp_n_var,
            record.tn_n_var,
            record.timestamp,
            len(record.intervals),
        ) + tuple(confusion)


def surface_rows(records):
    for record in records:
        yield tuple(record.params) + (
            record.tp_n_mean,
            record.tn_n_mean,
            record.tp_n_var,
            record.tn_n_var,
        )


def boxplot_rows(records):
    for number, record in enumerate(records):
        for index, interval in enumerate(record.intervals):
            tp_n, tn_n = normalized_rates(interval.confusion)
            yield (number,) + tuple(record.params) + (index, tp_n, tn_n)


def read_ledger_csv(path):
    """Read a ledger export back as a list of dicts of numbers."""
    integers = {"intervals", "tp", "fn", "fp", "tn"}
    with open(path, newline="") as file:
        reader = csv.DictReader(file)
        return [
            {k: int(v) if k in integers else float(v) for k, v in row.items()} for row in reader
        ]
