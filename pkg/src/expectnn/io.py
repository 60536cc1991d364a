"""Dataset, model and report file formats.

Datasets are UTF-8 CSV with a header: ``y`` first, then ``snp_*`` columns
(genotypes 0/1/2) and ``cov_*`` columns (reals). Gene membership lives in
an optional sidecar CSV with columns ``column_name,gene``. Floats are
written with ``repr`` so that reading back is exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .models import COVARIATE, GENOTYPE, Dataset, ExpectileModel
from .pipeline import TABLE_COLUMNS, FitReport, StudyReport


class DataFormatError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def read_csv(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def gene_map_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".genes.csv")


def dataset_header(data: Dataset) -> List[str]:
    names = []
    n_snp = n_cov = 0
    for j, kind in enumerate(data.column_kinds):
        given = data.column_names[j] if data.column_names else ""
        prefix = "snp_" if kind == GENOTYPE else "cov_"
        if given.startswith(prefix):
            names.append(given)
        elif kind == GENOTYPE:
            n_snp += 1
            names.append(f"snp_{n_snp}")
        else:
            n_cov += 1
            names.append(f"cov_{n_cov}")
    return names


def write_dataset(data: Dataset, path) -> List[Path]:
    """Write the CSV (and the gene sidecar when groups exist); returns paths written."""
    path = Path(path)
    names = dataset_header(data)
    if len(set(names)) != len(names):
        raise DataFormatError("column names are not unique")
    write_csv(path, ["y"] + names, ([y] + list(row) for y, row in zip(data.y, data.x)))
    written = [path]
    if data.gene_groups:
        side = gene_map_path(path)
        rows = [(names[c], gene) for gene, cols in data.gene_groups.items() for c in cols]
        write_csv(side, ["column_name", "gene"], rows)
        written.append(side)
    return written


def read_dataset(path, gene_map: Optional[str] = None) -> Dataset:
    """Read a dataset CSV; a ``<stem>.genes.csv`` sidecar is picked up automatically."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            body = [row for row in reader if row]
    except StopIteration:
        raise DataFormatError(f"{path}: empty file") from None
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not UTF-8 ({exc})") from None
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate column names")
    if "y" not in header:
        raise DataFormatError(f"{path}: missing required column 'y'")
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    feature_cols = [h for h in header if h != "y"]
    bad = [h for h in feature_cols if not (h.startswith("snp_") or h.startswith("cov_"))]
    if bad:
        raise DataFormatError(f"{path}: unrecognised columns {bad} (expected snp_* or cov_*)")
    if not feature_cols:
        raise DataFormatError(f"{path}: no snp_* or cov_* columns")
    try:
        table = np.array([[float(v) for v in row] for row in body])
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric entry ({exc})") from None
    if table.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged rows")
    yi = header.index("y")
    idx = [header.index(h) for h in feature_cols]
    kinds = tuple(GENOTYPE if h.startswith("snp_") else COVARIATE for h in feature_cols)
    groups = None
    side = Path(gene_map) if gene_map else gene_map_path(path)
    if side.exists():
        groups = {}
        for row in read_csv(side):
            name, gene = row["column_name"], row["gene"]
            if name not in feature_cols:
                raise DataFormatError(f"{side}: unknown column {name!r}")
            groups.setdefault(gene, []).append(feature_cols.index(name))
    try:
        return Dataset(table[:, idx], table[:, yi], kinds, groups, tuple(feature_cols))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(_clean(obj)), encoding="utf-8")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def save_model(model: ExpectileModel, path) -> None:
    write_json(model.to_dict(), path)


def load_model(path) -> ExpectileModel:
    try:
        return ExpectileModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: not a model document ({exc})") from None


def table_rows(rows: Iterable[dict]) -> List[list]:
    return [[r[c] for c in TABLE_COLUMNS] for r in rows]


def write_table(rows: Iterable[dict], path) -> None:
    write_csv(path, TABLE_COLUMNS, table_rows(rows))


def read_table(path) -> List[dict]:
    out = []
    for r in read_csv(path):
        out.append({
            "scenario": r["scenario"],
            "replicate": int(r["replicate"]),
            "method": r["method"],
            "tau": float(r["tau"]),
            "lambda": float(r["lambda"]),
            "mse_train": float(r["mse_train"]),
            "mse_val": float(r["mse_val"]),
            "mse_test": float(r["mse_test"]) if r["mse_test"] else None,
            "converged": r["converged"] == "true",
            "iterations": int(r["iterations"]),
        })
    return out


AGGREGATE_COLUMNS = ("scenario", "method", "tau", "n", "mean_mse_train", "sd_mse_train", "mean_mse_val",
                     "sd_mse_val", "mean_mse_test", "sd_mse_test")


def write_study(report: StudyReport, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "replicates.csv", out / "aggregate.csv", out / "plot_data.csv", out / "study.json"]
    write_table(report.rows, paths[0])
    write_csv(paths[1], AGGREGATE_COLUMNS,
              ([report.scenario] + [a[c] for c in AGGREGATE_COLUMNS[1:]] for a in report.aggregate))
    # one line per panel bar: training (TR) and testing (TS) mean MSE
    plot_rows = []
    for a in report.aggregate:
        plot_rows.append([report.scenario, a["method"], a["tau"], "TR", a["mean_mse_train"], a["sd_mse_train"]])
        plot_rows.append([report.scenario, a["method"], a["tau"], "TS", a["mean_mse_test"], a["sd_mse_test"]])
    write_csv(paths[2], ("scenario", "method", "tau", "set", "mean_mse", "sd_mse"), plot_rows)
    write_json(report.to_dict(), paths[3])
    return paths


def write_fit_reports(reports: Sequence[FitReport], out_dir, source: str = "") -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "fit_report.json", out / "summary.csv"]
    write_json({"source": source, "reports": [r.to_dict() for r in reports]}, paths[0])
    rows = []
    for r in reports:
        rows.append({
            "scenario": source,
            "replicate": 0,
            "method": r.method,
            "tau": r.tau,
            "lambda": r.chosen_lambda,
            "mse_train": r.mse_train,
            "mse_val": r.mse_val,
            "mse_test": r.mse_test,
            "converged": bool(r.optim["converged"]),
            "iterations": int(r.optim["iterations"]),
        })
    write_table(rows, paths[1])
    for r in reports:
        p = out / f"model_{r.method}_tau{fmt(r.tau)}.json"
        write_json(r.model, p)
        paths.append(p)
    return paths


def read_fit_reports(path) -> List[FitReport]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FitReport.from_dict(d) for d in doc["reports"]]


def write_curve(curve, path) -> None:
    write_csv(path, ("rank", "fitted"), curve)
