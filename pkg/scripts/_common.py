"""Shared bits for the table scripts: argument parsing and CSV output."""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

HEADER = ["table", "model", "payoff", "quantity", "setting", "n_paths", "mean", "std_error", "reference", "error"]


def parser(doc: str, default_paths: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--paths", type=int, default=default_paths)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout)")
    return p


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.9g}"
    return str(v)


class Table:
    def __init__(self, out: Path | None):
        self._fh = open(out, "w", newline="") if out else sys.stdout
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(HEADER)

    def add(self, table, model, payoff, quantity, setting, res, reference=math.nan):
        err = res.mean - reference if not math.isnan(reference) else math.nan
        self._w.writerow([_cell(v) for v in (table, model, payoff, quantity, setting, res.n_paths,
                                             float(res.mean), float(res.std_error), float(reference), float(err))])
        self._fh.flush()
