"""CSV / JSON serialisation of trajectories, ensemble summaries and manifests."""
import csv
import json
from pathlib import Path

import numpy as np

SIG_DIGITS = 12


def _fmt(x):
    return f"{x:.{SIG_DIGITS}g}"


def trajectory_columns(k):
    return ["t"] + [f"f{n}" for n in range(1, k + 1)] + ["V", "W", "metric", "switched_on"]


def trajectory_rows(traj):
    for i in range(len(traj)):
        yield (
            [float(traj.t[i])]
            + [float(x) for x in traj.fields[i]]
            + [float(traj.V[i]), float(traj.W[i]), float(traj.metric[i]), int(bool(traj.switched_on[i]))]
        )


def _open(path):
    path = Path(path)
    try:
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_table(columns, rows, path, fmt="csv", metadata=None):
    """Write rows under a header as CSV (LF endings, 12 significant digits) or JSON."""
    rows = [list(r) for r in rows]
    if fmt == "csv":
        with _open(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(x) if isinstance(x, float) else x for x in r])
    elif fmt == "json":
        doc = {"metadata": metadata or {}, "records": [dict(zip(columns, r)) for r in rows]}
        with _open(path) as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def emit_trajectory(traj, fmt, path, metadata=None):
    if len(traj) == 0:
        raise ValueError("cannot write an empty trajectory")
    meta = {"stop_time": traj.stop_time, "metric": traj.metric_name, "n_samples": len(traj)}
    meta.update(metadata or {})
    write_table(trajectory_columns(traj.k), trajectory_rows(traj), path, fmt, meta)


def read_json_records(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    return obj


def write_manifest(path, resolved, results, version):
    doc = {"package": "optlyap", "version": version, "config": resolved, "results": results}
    with _open(path) as fh:
        json.dump(_plain(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")
