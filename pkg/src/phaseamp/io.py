"""File formats: trajectory CSV, model checkpoints, logs, episode dumps.

Checkpoints are versioned JSON with sorted keys and no timestamps, so two
runs with the same seed write byte-identical files.  Floats round-trip
exactly (shortest-repr encoding).
"""

import csv
import json
from pathlib import Path

import numpy as np

from .data import Dataset, Trajectory
from .latent import LatentParams
from .nets import MlpParams, ModelParams

CHECKPOINT_FORMAT = "phaseamp-checkpoint"
CHECKPOINT_VERSION = 1
DT_TOLERANCE = 1e-6


def save_trajectory_csv(path, trajectory: Trajectory):
    n = trajectory.n_channels
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(n)])
        for k, row in enumerate(trajectory.data):
            writer.writerow([repr(float(k * trajectory.dt))]
                            + [repr(float(v)) for v in row])


def load_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "t":
            raise ValueError(f"{path}: expected header t,x0,...")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=np.float64)
    t = arr[:, 0]
    if len(t) < 2:
        raise ValueError(f"{path}: need at least two rows to infer the step size")
    steps = np.diff(t)
    dt = float(np.median(steps))
    if np.any(np.abs(steps - dt) > DT_TOLERANCE):
        raise ValueError(f"{path}: time steps are not uniform within "
                         f"{DT_TOLERANCE} s")
    return Trajectory(arr[:, 1:], dt)


def load_dataset(paths) -> Dataset:
    """Load trajectories from CSV paths, sorted so listing order is irrelevant."""
    ordered = sorted(str(p) for p in paths)
    if not ordered:
        raise ValueError("no trajectory files given")
    return Dataset([load_trajectory_csv(p) for p in ordered])


def _mlp_to_lists(mlp: MlpParams):
    return {k: v.tolist() for k, v in mlp.arrays().items()}


def _mlp_from_lists(obj):
    return MlpParams(**{k: np.asarray(v, dtype=np.float64) for k, v in obj.items()})


def save_checkpoint(path, model: ModelParams, latent: LatentParams,
                    optimizer_state=None, meta=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"n_obs": model.n_obs, "num_phases": model.num_phases,
                 "num_amplitudes": model.num_amplitudes,
                 "hidden": [model.encoder.b1.size, model.encoder.b2.size]},
        "latent": {"omega": latent.omega.tolist(), "lam": latent.lam.tolist(),
                   "dt": float(latent.dt)},
        "encoder": _mlp_to_lists(model.encoder),
        "decoder": _mlp_to_lists(model.decoder),
        "meta": meta or {},
    }
    if optimizer_state is not None:
        doc["optimizer"] = {
            "t": optimizer_state["t"],
            "m": {k: v.tolist() for k, v in optimizer_state["m"].items()},
            "v": {k: v.tolist() for k, v in optimizer_state["v"].items()},
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path):
    """Returns (model, latent, optimizer_state or None, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a phaseamp checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version "
                         f"{doc.get('version')}")
    dims = doc["dims"]
    model = ModelParams(_mlp_from_lists(doc["encoder"]),
                        _mlp_from_lists(doc["decoder"]),
                        dims["num_phases"], dims["num_amplitudes"])
    latent = LatentParams(np.asarray(doc["latent"]["omega"]),
                          np.asarray(doc["latent"]["lam"]),
                          doc["latent"]["dt"])
    opt = None
    if "optimizer" in doc:
        opt = {"t": doc["optimizer"]["t"],
               "m": {k: np.asarray(v) for k, v in doc["optimizer"]["m"].items()},
               "v": {k: np.asarray(v) for k, v in doc["optimizer"]["v"].items()}}
    return model, latent, opt, doc.get("meta", {})


def append_jsonl(path, record):
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_episode_csv(path, log):
    """time, delivered target, actual observables, latent trace, flags."""
    n = log.desired.shape[1]
    p = log.latent_phi.shape[1]
    a = log.latent_r.shape[1]
    header = (["t"] + [f"des{i}" for i in range(n)]
              + [f"act{i}" for i in range(n)]
              + [f"phi{i}" for i in range(p)] + [f"r{i}" for i in range(a)]
              + ["flags"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(log.times)):
            row = ([repr(float(log.times[k]))]
                   + [repr(float(v)) for v in log.desired[k]]
                   + [repr(float(v)) for v in log.actual[k]]
                   + [repr(float(v)) for v in log.latent_phi[k]]
                   + [repr(float(v)) for v in log.latent_r[k]]
                   + [int(log.flags[k])])
            writer.writerow(row)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
