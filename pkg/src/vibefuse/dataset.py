"""Two-fidelity response datasets: generation, persistence, splitting.

A dataset row pairs one parameter vector theta with the flattened
response magnitudes over the frequency grid (output DOFs vary fastest
within each frequency).  High fidelity comes from the full model, low
fidelity from the condensed model expanded back to the same outputs.
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import csvio
from .errors import DatasetError
from .fem import realize_system, solve_full_frf
from .guyan import condense, expand_response, solve_reduced_frf

FIDELITY_HIGH = "high"
FIDELITY_LOW = "low"


@dataclass
class FidelityDataset:
    """Responses of one fidelity over a common design.

    Attributes
    ----------
    fidelity : str
        ``"high"`` or ``"low"``.
    frequencies_hz : ndarray, shape (p,)
    output_dofs : ndarray, shape (n,)
    theta : ndarray, shape (rows, m)
    responses : ndarray, shape (rows, n * p)
        Positive magnitudes, DOF-major within each frequency.
    metadata : dict
    """

    fidelity: str
    frequencies_hz: np.ndarray
    output_dofs: np.ndarray
    theta: np.ndarray
    responses: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequencies_hz = np.asarray(self.frequencies_hz, dtype=float)
        self.output_dofs = np.asarray(self.output_dofs, dtype=np.int64)
        self.theta = np.asarray(self.theta, dtype=float)
        self.responses = np.asarray(self.responses, dtype=float)
        self.validate()

    def validate(self):
        if self.fidelity not in (FIDELITY_HIGH, FIDELITY_LOW):
            raise DatasetError(f"unknown fidelity {self.fidelity!r}")
        rows = self.theta.shape[0]
        want = len(self.frequencies_hz) * len(self.output_dofs)
        if self.responses.shape != (rows, want):
            raise DatasetError(
                f"responses shape {self.responses.shape} != ({rows}, {want})"
            )
        if not np.all(np.isfinite(self.responses)) or np.any(self.responses <= 0.0):
            raise DatasetError("responses must be finite and positive")
        if rows > 1 and len(np.unique(self.theta, axis=0)) != rows:
            raise DatasetError("duplicate theta rows")

    @property
    def n_rows(self):
        return self.theta.shape[0]

    @property
    def n_outputs(self):
        return len(self.output_dofs)


_WORKER = {}


def _worker_init(system, request, partition):
    _WORKER["args"] = (system, request, partition)


def _simulate_row(theta):
    system, request, partition = _WORKER["args"]
    return _simulate_pair(system, request, partition, theta)


def _simulate_pair(system, request, partition, theta):
    sysm = realize_system(system, theta)
    high = solve_full_frf(sysm, request)
    red = condense(sysm, partition)
    z_m = solve_reduced_frf(red, request)
    low = expand_response(red, z_m, request.output_dofs)
    return high, low


def generate_datasets(system, request, partition, theta, jobs=1, metadata=None):
    """Simulate both fidelities over a design matrix.

    Parameters
    ----------
    system : SegmentedSystem
    request : FrfRequest
    partition : DofPartition
        Must retain every forced DOF as a master.
    theta : ndarray, shape (rows, 2 * n_segments)
    jobs : int
        Worker processes; 1 runs inline.  Row order is preserved either
        way, so results are independent of ``jobs``.
    metadata : dict, optional
        Copied into both datasets.

    Returns
    -------
    (FidelityDataset, FidelityDataset)
        High fidelity first.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[1] != 2 * system.n_segments:
        raise ValueError(
            f"theta must have shape (rows, {2 * system.n_segments}), got {theta.shape}"
        )
    if jobs < 1:
        raise ValueError(f"jobs must be positive, got {jobs}")

    if jobs == 1:
        pairs = [_simulate_pair(system, request, partition, t) for t in theta]
    else:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_worker_init, initargs=(system, request, partition)
        ) as pool:
            pairs = list(pool.map(_simulate_row, theta, chunksize=8))

    high = np.vstack([p[0] for p in pairs])
    low = np.vstack([p[1] for p in pairs])
    meta = dict(metadata or {})
    mk = lambda fid, resp: FidelityDataset(
        fidelity=fid,
        frequencies_hz=request.frequencies_hz,
        output_dofs=request.output_dofs,
        theta=theta,
        responses=resp,
        metadata=dict(meta, fidelity=fid),
    )
    return mk(FIDELITY_HIGH, high), mk(FIDELITY_LOW, low)


def _sidecar_path(csv_path):
    base, _ = os.path.splitext(str(csv_path))
    return base + ".json"


def save_dataset(ds, csv_path):
    """Write one dataset as CSV plus a JSON sidecar.

    The CSV holds theta columns then response columns; grid, output DOFs
    and metadata (including any timestamps) go to the sidecar so the CSV
    bytes depend only on the data.
    """
    m = ds.theta.shape[1]
    header = [f"theta_{i + 1}" for i in range(m)] + [
        f"u_{i + 1}" for i in range(ds.responses.shape[1])
    ]
    rows = (
        list(ds.theta[i]) + list(ds.responses[i]) for i in range(ds.n_rows)
    )
    csvio.write_csv(csv_path, header, rows)
    sidecar = {
        "fidelity": ds.fidelity,
        "frequencies_hz": [repr(float(f)) for f in ds.frequencies_hz],
        "output_dofs": [int(d) for d in ds.output_dofs],
        "n_theta": m,
        "metadata": ds.metadata,
    }
    with open(_sidecar_path(csv_path), "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def load_dataset(csv_path):
    """Load a dataset written by ``save_dataset`` (bitwise round trip)."""
    side_path = _sidecar_path(csv_path)
    if not os.path.exists(side_path):
        raise DatasetError(f"missing sidecar {side_path}")
    with open(side_path) as fh:
        side = json.load(fh)
    header, rows, _ = csvio.read_csv(csv_path)
    m = int(side["n_theta"])
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[1] <= m:
        raise DatasetError(f"{csv_path}: malformed table")
    return FidelityDataset(
        fidelity=side["fidelity"],
        frequencies_hz=np.array([float(s) for s in side["frequencies_hz"]]),
        output_dofs=np.array(side["output_dofs"], dtype=np.int64),
        theta=data[:, :m],
        responses=data[:, m:],
        metadata=side.get("metadata", {}),
    )


@dataclass
class NestedSplit:
    """Row-index split with HF-train nested inside LF-train.

    ``test_ids`` is the complement of ``lf_train_ids``; all id arrays
    are sorted.
    """

    lf_train_ids: np.ndarray
    hf_train_ids: np.ndarray
    test_ids: np.ndarray
    n_rows: int
    seed: int

    def __post_init__(self):
        self.lf_train_ids = np.asarray(self.lf_train_ids, dtype=np.int64)
        self.hf_train_ids = np.asarray(self.hf_train_ids, dtype=np.int64)
        self.test_ids = np.asarray(self.test_ids, dtype=np.int64)
        if not np.all(np.isin(self.hf_train_ids, self.lf_train_ids)):
            raise DatasetError("HF-train ids must be a subset of LF-train ids")
        expected_test = np.setdiff1d(np.arange(self.n_rows), self.lf_train_ids)
        if not np.array_equal(np.sort(self.test_ids), expected_test):
            raise DatasetError("test ids must be the complement of LF-train ids")
        if len(self.test_ids) == 0:
            raise DatasetError("test set is empty")


def split_nested(n_rows, n_lf_train, n_hf_train, seed):
    """Draw a nested LF/HF train split.

    LF-train rows are a uniform draw without replacement; HF-train rows
    are a uniform subset of LF-train.  For a fixed seed, growing
    ``n_hf_train`` extends the HF set (prefix of one permutation), which
    the data-efficiency sweep relies on.
    """
    if not 0 < n_hf_train <= n_lf_train < n_rows:
        raise DatasetError(
            f"need 0 < hf ({n_hf_train}) <= lf ({n_lf_train}) < rows ({n_rows})"
        )
    rng = np.random.default_rng(seed)
    lf = np.sort(rng.permutation(n_rows)[:n_lf_train])
    hf = np.sort(rng.permutation(lf)[:n_hf_train])
    test = np.setdiff1d(np.arange(n_rows), lf)
    return NestedSplit(lf, hf, test, n_rows, seed)


def save_split(split, path):
    payload = {
        "n_rows": split.n_rows,
        "seed": split.seed,
        "lf_train_ids": split.lf_train_ids.tolist(),
        "hf_train_ids": split.hf_train_ids.tolist(),
        "test_ids": split.test_ids.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_split(path):
    with open(path) as fh:
        d = json.load(fh)
    return NestedSplit(
        np.array(d["lf_train_ids"], dtype=np.int64),
        np.array(d["hf_train_ids"], dtype=np.int64),
        np.array(d["test_ids"], dtype=np.int64),
        int(d["n_rows"]),
        int(d["seed"]),
    )


@dataclass
class DatasetSummary:
    """Per-response-column statistics and histograms."""

    fidelity: str
    frequencies_hz: np.ndarray
    output_dofs: np.ndarray
    minima: np.ndarray
    maxima: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    bin_edges: np.ndarray
    bin_counts: np.ndarray


def summarize(ds, bins=30):
    """Column statistics plus fixed-width histograms per column."""
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    r = ds.responses
    lo = r.min(axis=0)
    hi = r.max(axis=0)
    n_cols = r.shape[1]
    edges = np.empty((n_cols, bins + 1))
    counts = np.empty((n_cols, bins), dtype=np.int64)
    for c in range(n_cols):
        if lo[c] == hi[c]:
            edges[c] = np.linspace(lo[c], hi[c], bins + 1)
            counts[c] = 0
            counts[c, 0] = r.shape[0]
        else:
            counts[c], edges[c] = np.histogram(r[:, c], bins=bins, range=(lo[c], hi[c]))
    p = len(ds.frequencies_hz)
    n = len(ds.output_dofs)
    return DatasetSummary(
        fidelity=ds.fidelity,
        frequencies_hz=np.repeat(ds.frequencies_hz, n)[: n * p],
        output_dofs=np.tile(ds.output_dofs, p),
        minima=lo,
        maxima=hi,
        means=r.mean(axis=0),
        stds=r.std(axis=0),
        bin_edges=edges,
        bin_counts=counts,
    )


def write_summary_csv(summary, path, comments=()):
    header = ["freq_hz", "output_dof", "min", "max", "mean", "std"]
    rows = (
        [summary.frequencies_hz[c], summary.output_dofs[c], summary.minima[c],
         summary.maxima[c], summary.means[c], summary.stds[c]]
        for c in range(len(summary.means))
    )
    csvio.write_csv(path, header, rows, comments)


def write_histogram_csv(summary, path, comments=()):
    header = ["freq_hz", "output_dof", "bin_lo", "bin_hi", "count"]

    def rows():
        for c in range(len(summary.means)):
            for b in range(summary.bin_counts.shape[1]):
                yield [
                    summary.frequencies_hz[c],
                    summary.output_dofs[c],
                    summary.bin_edges[c, b],
                    summary.bin_edges[c, b + 1],
                    summary.bin_counts[c, b],
                ]

    csvio.write_csv(path, header, rows(), comments)
