"""Metric serialization: CSV emission, CDF tables, improvement matrices,
rolling means, and the per-run manifest.

Every writer stages to a temp file and renames, so a failed run never
leaves a partial file at the final path. Floats are written with repr()
(shortest round-trip), which keeps equal runs byte-identical. Metric
files carry no timestamps; wall-clock provenance lives only in the
run manifest.
"""

import hashlib
import json
import os
import time
from dataclasses import asdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .baselines import EvalReport


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Atomic CSV write (stage then rename), LF endings, UTF-8."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def write_error_report(report: EvalReport, out_dir, name: str) -> List[str]:
    """errors/summary/CDF CSVs for one model; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    errors_path = os.path.join(out_dir, f"{name}_errors.csv")
    write_csv(errors_path, ["error_m"], ([e] for e in report.error_samples_m))
    summary_path = os.path.join(out_dir, f"{name}_summary.csv")
    write_csv(summary_path, ["model", "mde_m", "n_samples"],
              [[name, report.mde_m, len(report.error_samples_m)]])
    cdf_path = os.path.join(out_dir, f"{name}_cdf.csv")
    write_csv(cdf_path, ["error_m", "fraction"], cdf_table(report.error_samples_m))
    paths = [errors_path, summary_path, cdf_path]
    if report.loss_curve is not None:
        curve_path = os.path.join(out_dir, f"{name}_loss_curve.csv")
        write_loss_curve(report.loss_curve, curve_path)
        paths.append(curve_path)
    return paths


def write_loss_curve(curve, path) -> None:
    write_csv(path, ["epoch", "train_mae", "val_mae"],
              ([p.epoch, p.train_mae, p.val_mae] for p in curve))


def write_episode_metrics(records, path) -> None:
    """One row per training episode (the Fig.-4-style panels feed off this)."""
    write_csv(path, ["episode", "iow", "reward", "steps", "error_m"],
              ([r.episode, r.iow, r.reward, r.steps, r.error_m] for r in records))


def write_episode_diagnostics(records, path) -> None:
    write_csv(path, ["episode", "epsilon", "loss"],
              ([r.episode, r.epsilon, r.loss] for r in records))


def cdf_table(sorted_errors: np.ndarray) -> List[List[float]]:
    """(error_m, fraction <= error_m) rows; fraction is nondecreasing to 1.0."""
    n = len(sorted_errors)
    return [[float(e), (i + 1) / n] for i, e in enumerate(sorted_errors)]


def rolling_mean(values: Sequence[float], window: int = 100) -> np.ndarray:
    """Trailing mean over up to `window` previous points (shorter at the start)."""
    v = np.asarray(values, dtype=np.float64)
    sums = np.concatenate([[0.0], np.cumsum(v)])
    out = np.empty(len(v))
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (sums[i + 1] - sums[lo]) / (i + 1 - lo)
    return out


def write_panel(episodes: Sequence[int], values: Sequence[float], path, value_name: str,
                window: int = 100) -> None:
    """Plot-ready per-episode series with its rolling mean."""
    smooth = rolling_mean(values, window)
    write_csv(path, ["episode", value_name, f"{value_name}_rolling_mean"],
              ([e, v, s] for e, v, s in zip(episodes, values, smooth)))


def improvement_matrix(mdes: Dict[str, float]) -> List[List]:
    """Rows of (model_a, model_b, improvement of a over b = (mde_b - mde_a)/mde_b)."""
    rows = []
    for a, mde_a in mdes.items():
        for b, mde_b in mdes.items():
            rows.append([a, b, (mde_b - mde_a) / mde_b if mde_b != 0 else 0.0])
    return rows


def write_benchmark_summary(reports: Dict[str, EvalReport], failures: Dict[str, str], out_dir) -> List[str]:
    """Cross-model summary + pairwise improvement matrix."""
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    rows = [[name, rep.mde_m, len(rep.error_samples_m), "ok"] for name, rep in reports.items()]
    rows += [[name, "", "", f"failed: {msg}"] for name, msg in failures.items()]
    write_csv(summary_path, ["model", "mde_m", "n_samples", "status"], rows)
    matrix_path = os.path.join(out_dir, "improvements.csv")
    write_csv(matrix_path, ["model_a", "model_b", "improvement"],
              improvement_matrix({n: r.mde_m for n, r in reports.items()}))
    return [summary_path, matrix_path]


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, config_snapshot: dict, seed: Optional[int], artifacts: Sequence[str]) -> str:
    """Provenance record: config snapshot, seed, artifact hashes, wall time."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "config": config_snapshot,
        "seed": seed,
        "artifacts": {os.path.basename(p): sha256_file(p) for p in artifacts if os.path.exists(p)},
        "created_unix": time.time(),
    }
    path = os.path.join(out_dir, "run_manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def render_svgs(csv_dir, out_dir=None) -> List[str]:
    """Optional static renderings of the plot-ready CSVs (needs matplotlib)."""
    import csv as _csv

    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    out_dir = out_dir or csv_dir
    written = []
    for fname in sorted(os.listdir(csv_dir)):
        if not fname.endswith(".csv"):
            continue
        with open(os.path.join(csv_dir, fname), encoding="utf-8") as fh:
            reader = _csv.reader(fh)
            header = next(reader, None)
            if not header or len(header) < 2:
                continue
            try:
                cols = np.array([[float(v) for v in row] for row in reader])
            except ValueError:
                continue  # non-numeric table (e.g. the summary)
        if cols.size == 0:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for j in range(1, cols.shape[1]):
            ax.plot(cols[:, 0], cols[:, j], label=header[j], linewidth=1)
        ax.set_xlabel(header[0])
        ax.legend(fontsize=7)
        ax.grid(alpha=0.3)
        svg_path = os.path.join(out_dir, fname[:-4] + ".svg")
        fig.savefig(svg_path, bbox_inches="tight")
        plt.close(fig)
        written.append(svg_path)
    return written


def report_as_dict(report: EvalReport) -> dict:
    out = {"mde_m": report.mde_m, "n_samples": int(len(report.error_samples_m))}
    if report.loss_curve:
        out["final_train_mae"] = report.loss_curve[-1].train_mae
        out["final_val_mae"] = report.loss_curve[-1].val_mae
    return out
