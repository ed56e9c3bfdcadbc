"""On-disk formats: problem specs, datasets with sidecar metadata, fit
results. Every file written here carries a provenance record (tool version
and invocation). Floats go through ``repr``/``%.17g`` so they read back
bit-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ValidationError
from .graph import Dag, validate_dag
from .learn import FitConfig, FitResult
from .scm import CounterfactualDataset, InterventionModel, LinearGaussianScm, MixingModel

TOOL = "causal-abstraction"


def provenance(argv: list[str] | None) -> dict:
    return {"tool": TOOL, "version": __version__, "argv": list(argv) if argv is not None else None}


def _comment(argv: list[str] | None) -> str:
    return f"# {TOOL} {__version__} argv={json.dumps(argv)}"


def read_json(path: str | Path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def write_json(path: str | Path, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


@dataclass
class ProblemSpec:
    dag: Dag
    interventions: InterventionModel
    A: np.ndarray | None = None
    seed: int | None = None

    @classmethod
    def from_json(cls, d: dict) -> ProblemSpec:
        if not isinstance(d, dict) or "nodes" not in d:
            raise ValidationError("problem spec needs a 'nodes' count")
        dag = validate_dag(int(d["nodes"]), d.get("edges", []))
        if not d.get("interventions"):
            raise ValidationError("EmptyTarget: problem spec needs a nonempty 'interventions' list")
        iv = InterventionModel.build(d["interventions"], d.get("weights"), n=dag.n)
        A = None
        if d.get("A") is not None:
            A = LinearGaussianScm(dag, np.array(d["A"], dtype=float)).A
        seed = d.get("seed")
        return cls(dag, iv, A, None if seed is None else int(seed))


def read_problem(path: str | Path) -> ProblemSpec:
    return ProblemSpec.from_json(read_json(path))


def dataset_paths(prefix: str | Path) -> tuple[Path, Path, Path]:
    prefix = str(prefix)
    return Path(prefix + ".csv"), Path(prefix + ".meta.json"), Path(prefix + ".labels.csv")


def write_dataset(prefix: str | Path, ds: CounterfactualDataset, argv: list[str] | None = None,
                  extra_meta: dict | None = None) -> None:
    """Observations to ``<prefix>.csv``; ground truth to ``<prefix>.meta.json``;
    target indices to ``<prefix>.labels.csv`` when the dataset kept them."""
    data_path, meta_path, label_path = dataset_paths(prefix)
    n = ds.n
    header = ",".join([f"x_{i}" for i in range(1, n + 1)] + [f"xt_{i}" for i in range(1, n + 1)])
    np.savetxt(data_path, np.hstack([ds.x, ds.xt]), fmt="%.17g", delimiter=",",
               header=_comment(argv) + "\n" + header, comments="")
    meta = {
        "provenance": provenance(argv),
        "seed": ds.seed,
        "rows": len(ds),
        "dag": ds.scm.dag.to_json() if ds.scm is not None else None,
        "A": ds.scm.A.tolist() if ds.scm is not None else None,
        "Q": ds.mixing.Q.tolist() if ds.mixing is not None else None,
        "targets": [list(t) for t in ds.interventions.targets] if ds.interventions is not None else None,
        "weights": ds.interventions.weights.tolist() if ds.interventions is not None else None,
        "labels_present": ds.labels is not None,
    }
    if extra_meta:
        meta.update(extra_meta)
    write_json(meta_path, meta)
    if ds.labels is not None:
        np.savetxt(label_path, ds.labels, fmt="%d", header=_comment(argv) + "\ntarget_index", comments="")
    elif label_path.exists():
        label_path.unlink()


def read_observations(prefix: str | Path) -> CounterfactualDataset:
    """Observation pairs only. Never touches the metadata or labels."""
    data_path, _, _ = dataset_paths(prefix)
    with open(data_path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise ValidationError(f"{data_path}: empty file")
    header = lines[0].strip().split(",")
    if len(header) % 2 or not header[0].startswith("x_"):
        raise ValidationError(f"{data_path}: unexpected header {header[:4]}...")
    n = len(header) // 2
    if len(lines) == 1:
        raise ValidationError(f"{data_path}: EmptyDataset")
    arr = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if arr.shape[1] != 2 * n:
        raise ValidationError(f"{data_path}: rows have {arr.shape[1]} columns, header has {2 * n}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{data_path}: non-finite values")
    return CounterfactualDataset(x=arr[:, :n].copy(), xt=arr[:, n:].copy())


def read_dataset(prefix: str | Path) -> CounterfactualDataset:
    """Observations plus ground truth from the sidecar metadata (and labels if present)."""
    ds = read_observations(prefix)
    _, meta_path, label_path = dataset_paths(prefix)
    meta = read_json(meta_path)
    dag = validate_dag(meta["dag"]["nodes"], meta["dag"]["edges"])
    if dag.n != ds.n:
        raise ValidationError(f"metadata describes {dag.n} nodes, data has {ds.n}")
    ds.seed = meta.get("seed")
    ds.scm = LinearGaussianScm(dag, np.array(meta["A"], dtype=float))
    ds.mixing = MixingModel(np.array(meta["Q"], dtype=float))
    ds.interventions = InterventionModel.build(meta["targets"], meta["weights"], n=dag.n)
    if meta.get("labels_present") and label_path.exists():
        with open(label_path) as fh:
            rows = [ln for ln in fh if not ln.startswith("#")][1:]
        ds.labels = np.array([int(r) for r in rows], dtype=np.int64)
    return ds


def fit_result_to_json(res: FitResult, argv: list[str] | None = None) -> dict:
    """Serializable fit summary. Wall-clock time is left out so reruns are byte-identical."""
    finite = lambda v: float(v) if np.isfinite(v) else None  # noqa: E731
    return {
        "provenance": provenance(argv),
        "seed": res.config.seed,
        "n": len(res.Q),
        "Q": res.Q.tolist(),
        "A": res.A.tolist(),
        "weights": res.sparse_weights(),
        "objective": finite(res.objective),
        "stage_objectives": [finite(v) for v in res.stage_objectives],
        "trace": [[finite(v) for v in t] for t in res.traces],
        "best_restart": res.best_restart,
        "restart_objectives": [finite(v) for v in res.restart_objectives],
        "restart_status": res.restart_status,
        "config": res.config.to_json(),
    }


def read_fit(path: str | Path) -> dict:
    d = read_json(path)
    for key in ("Q", "A"):
        if key not in d:
            raise ValidationError(f"{path}: fit result lacks {key!r}")
    d["Q"] = np.array(d["Q"], dtype=float)
    d["A"] = np.array(d["A"], dtype=float)
    return d


def read_config(path: str | Path) -> FitConfig:
    return FitConfig.from_json(read_json(path))
