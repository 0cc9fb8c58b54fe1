import csv
import json
import logging
import math
import os
import traceback

import numpy as np


def plain(value):
    """JSON-ready copy of `value` with numpy scalars and arrays unwrapped."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def _cell(value):
    # floats round-trip through repr so reruns compare byte for byte
    value = plain(value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return "" if value is None else value


class ReportList:
    """Summary values plus named detail tables of one experiment run."""

    def __init__(self, experiment, seed):
        self.experiment = experiment
        self.seed = seed
        self.summary = {"experiment": experiment, "seed": seed}
        self.tables = {}
        self.documents = {}

    def set(self, key, value):
        self.summary[key] = plain(value)

    def update(self, values, prefix=""):
        for key, value in values.items():
            self.set(f"{prefix}{key}", value)

    def stochastic(self, key, value, std_error, N, seed=None):
        """A Monte Carlo number, always stored with its standard error, walk count and seed."""
        self.set(key, {"value": value, "std_error": std_error, "N": N,
                       "seed": self.seed if seed is None else seed})

    def attach_lattice(self, lattice):
        """Attach the lattice document and, unless the run produced one, its invariant-check table."""
        self.documents["lattice"] = lattice.to_dict()
        if "lattice_audit" not in self.tables:
            self.add_rows("lattice_audit", lattice.audit())

    def add_rows(self, table, rows):
        self.tables.setdefault(table, []).extend(plain(row) for row in rows)

    def export_to_json_file(self, filename):
        with open(filename, "w", encoding="utf-8", newline="\n") as f:
            json.dump(self.summary, f, indent=4)
            f.write("\n")

    def export_table_to_csv_file(self, table, filename):
        rows = self.tables[table]
        fieldnames = []
        for row in rows:
            fieldnames.extend(key for key in row if key not in fieldnames)
        with open(filename, "w", newline="", encoding="utf-8") as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=fieldnames, delimiter=",", lineterminator="\r\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(row.get(key)) for key in fieldnames})

    def export(self, output_dir):
        """Write the summary JSON and one CSV per table; on failure remove what was written."""
        os.makedirs(output_dir, exist_ok=True)
        written = []
        try:
            path = os.path.join(output_dir, f"{self.experiment}_summary.json")
            written.append(path)
            self.export_to_json_file(path)
            for name in sorted(self.documents):
                path = os.path.join(output_dir, f"{self.experiment}_{name}.json")
                written.append(path)
                with open(path, "w", encoding="utf-8", newline="\n") as f:
                    json.dump(plain(self.documents[name]), f, indent=4)
            for table in sorted(self.tables):
                if not self.tables[table]:
                    logging.warning(f"Table '{table}' is empty; no CSV written")
                    continue
                path = os.path.join(output_dir, f"{self.experiment}_{table}.csv")
                written.append(path)
                self.export_table_to_csv_file(table, path)
        except Exception as e:
            logging.error(f"Writing reports failed: {e}")
            logging.debug(traceback.format_exc())
            for path in written:
                if os.path.exists(path):
                    os.remove(path)
            raise
        for path in written:
            logging.info(f"Report written: {path}")
        return written
