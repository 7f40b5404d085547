"""Emulator evaluation: error metrics, comparison runs, and studies.

The error of an emulator at response component r is the mean squared
prediction error over the test rows; reports carry both that value and
its natural log (log of an exact zero is the -inf sentinel).  Study
runners train emulators on prescribed splits and persist per-component
results as CSV for downstream analysis.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from . import csvio
from .composite_net import (
    build_composite,
    fill_pseudo_high_fidelity,
    predict_high_fidelity,
    train_composite,
)
from .dataset import split_nested
from .multilevel_gp import fit_two_level, predict_two_level

EMULATOR_NET = "mfdfcnn"
EMULATOR_GP = "mlmrgp"
EMULATOR_LOWFID = "lowfid"


def mse_per_component(y_true, y_pred):
    """Mean squared error per response component, shape (n*p,)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 2:
        raise ValueError(f"shapes differ: {y_true.shape} vs {y_pred.shape}")
    return np.mean((y_true - y_pred) ** 2, axis=0)


def log_mse(mse):
    """Natural log of the per-component MSE; exact zeros map to -inf."""
    mse = np.asarray(mse, dtype=float)
    if np.any(mse < 0.0):
        raise ValueError("mse must be nonnegative")
    out = np.full_like(mse, -np.inf)
    pos = mse > 0.0
    out[pos] = np.log(mse[pos])
    return out


@dataclass
class EvalReport:
    """Per-component test error of one emulator on one split."""

    emulator: str
    frequencies_hz: np.ndarray
    output_dofs: np.ndarray
    mse: np.ndarray
    log_mse: np.ndarray
    n_test: int

    def mean_log_mse(self):
        return float(np.mean(self.log_mse))


def make_report(emulator, dataset, y_pred, test_ids):
    """Evaluate predictions against a dataset's rows."""
    y_true = dataset.responses[test_ids]
    mse = mse_per_component(y_true, y_pred)
    n = dataset.n_outputs
    return EvalReport(
        emulator=emulator,
        frequencies_hz=np.repeat(dataset.frequencies_hz, n),
        output_dofs=np.tile(dataset.output_dofs, len(dataset.frequencies_hz)),
        mse=mse,
        log_mse=log_mse(mse),
        n_test=len(test_ids),
    )


def train_net_on_split(high, low, split, net_cfg, plan):
    """Build, fuse and train the composite net for one split."""
    lf = split.lf_train_ids
    real_pos = np.searchsorted(lf, split.hf_train_ids)
    fused = fill_pseudo_high_fidelity(
        low.theta[lf],
        low.responses[lf],
        high.responses[split.hf_train_ids],
        real_pos,
        plan,
    )
    net = build_composite(net_cfg, plan.seed)
    history = train_composite(net, fused, plan)
    return net, history


def fit_gp_on_split(high, low, split, gp_cfg):
    """Fit the two-level GP on one split's nested training data."""
    lf, hf = split.lf_train_ids, split.hf_train_ids
    return fit_two_level(
        low.theta[lf],
        low.responses[lf],
        high.theta[hf],
        high.responses[hf],
        low.responses[hf],
        gp_cfg,
    )


@dataclass
class ComparisonResult:
    net_report: EvalReport
    gp_report: EvalReport
    lowfid_report: EvalReport
    net: object
    gp: object
    history: np.ndarray


def run_comparison(
    high, low, split, net_cfg, plan, gp_cfg, out_dir, config_hash="", curve_seed=0,
    n_curves=6, net=None, gp=None,
):
    """Compare both emulators on one split and persist the results.

    Emulators passed in as ``net``/``gp`` are reused; missing ones are
    trained here.  Writes ``comparison.csv`` (per-component MSE of the
    net, the GP and the raw low-fidelity responses), per-frequency
    scatter files with the per-sample values the metrics derive from,
    and ``n_curves`` seeded test-sample response curves.
    """
    os.makedirs(out_dir, exist_ok=True)
    comments = [f"config_hash={config_hash}"] if config_hash else []
    test = split.test_ids
    x_test = high.theta[test]

    history = np.empty(0)
    if net is None:
        net, history = train_net_on_split(high, low, split, net_cfg, plan)
    if gp is None:
        gp = fit_gp_on_split(high, low, split, gp_cfg)

    pred_net = predict_high_fidelity(net, x_test)
    pred_gp = predict_two_level(gp, x_test)[0]
    pred_lf = low.responses[test]

    net_report = make_report(EMULATOR_NET, high, pred_net, test)
    gp_report = make_report(EMULATOR_GP, high, pred_gp, test)
    lf_report = make_report(EMULATOR_LOWFID, high, pred_lf, test)

    n_out = high.n_outputs
    header = ["freq_point", "freq_hz", "output_dof",
              "mse_mfdfcnn", "mse_mlmrgp", "mse_lowfid",
              "log_mse_mfdfcnn", "log_mse_mlmrgp", "log_mse_lowfid"]
    rows = (
        [c // n_out + 1, net_report.frequencies_hz[c], net_report.output_dofs[c],
         net_report.mse[c], gp_report.mse[c], lf_report.mse[c],
         net_report.log_mse[c], gp_report.log_mse[c], lf_report.log_mse[c]]
        for c in range(len(net_report.mse))
    )
    csvio.write_csv(os.path.join(out_dir, "comparison.csv"), header, rows, comments)

    y_true = high.responses[test]
    n = high.n_outputs
    for fi, f_hz in enumerate(high.frequencies_hz):
        header = ["row_id", "output_dof", "actual", "pred_mfdfcnn", "pred_mlmrgp", "low_fidelity"]

        def rows():
            for k, rid in enumerate(test):
                for j in range(n):
                    c = fi * n + j
                    yield [rid, high.output_dofs[j], y_true[k, c],
                           pred_net[k, c], pred_gp[k, c], pred_lf[k, c]]

        csvio.write_csv(
            os.path.join(out_dir, f"scatter_f{fi + 1}.csv"), header, rows(), comments
        )

    rng = np.random.default_rng(curve_seed)
    n_curves = min(n_curves, len(test))
    chosen = rng.choice(test, size=n_curves, replace=False)
    for k, rid in enumerate(chosen):
        pos = int(np.searchsorted(test, rid))
        header = ["freq_hz", "output_dof", "lf", "hf", "pred_mfdfcnn", "pred_mlmrgp"]

        def rows():
            for fi, f_hz in enumerate(high.frequencies_hz):
                for j in range(n):
                    c = fi * n + j
                    yield [f_hz, high.output_dofs[j], low.responses[rid, c],
                           high.responses[rid, c], pred_net[pos, c], pred_gp[pos, c]]

        csvio.write_csv(
            os.path.join(out_dir, f"curves_{k + 1}.csv"), header, rows(),
            comments + [f"row_id={rid}"],
        )

    return ComparisonResult(net_report, gp_report, lf_report, net, gp, history)


@dataclass
class StudyReport:
    """Per-run (or per-setting) reports of one study."""

    kind: str
    labels: list
    reports: list


def run_robustness(
    high, low, n_lf, n_hf, base_seed, runs, net_cfg, plan, gp_cfg, out_dir, config_hash=""
):
    """Repeat the comparison over ``runs`` reshuffled splits.

    Split t uses seed ``base_seed + t``; emulator seeds stay at their
    configured values, so run-to-run spread isolates split variation.
    Writes ``robustness.csv`` in long format.
    """
    os.makedirs(out_dir, exist_ok=True)
    comments = [f"config_hash={config_hash}"] if config_hash else []
    labels = []
    reports = []
    rows_out = []
    n_out = high.n_outputs
    for t in range(runs):
        split = split_nested(high.n_rows, n_lf, n_hf, base_seed + t)
        test = split.test_ids
        net, _ = train_net_on_split(high, low, split, net_cfg, plan)
        gp = fit_gp_on_split(high, low, split, gp_cfg)
        rep_net = make_report(EMULATOR_NET, high, predict_high_fidelity(net, high.theta[test]), test)
        rep_gp = make_report(EMULATOR_GP, high, predict_two_level(gp, high.theta[test])[0], test)
        labels.append(t)
        reports.append((rep_net, rep_gp))
        for rep in (rep_net, rep_gp):
            for c in range(len(rep.mse)):
                rows_out.append(
                    [t, c // n_out + 1, rep.emulator, rep.frequencies_hz[c],
                     rep.output_dofs[c], rep.mse[c], rep.log_mse[c]]
                )
    csvio.write_csv(
        os.path.join(out_dir, "robustness.csv"),
        ["run", "freq_point", "emulator", "freq_hz", "output_dof", "mse", "log_mse"],
        rows_out,
        comments,
    )
    return StudyReport("robustness", labels, reports)


def run_hf_sweep(
    high, low, n_lf, hf_sizes, split_seed, net_cfg, plan, gp_cfg, out_dir,
    config_hash="",
):
    """Both emulators' error versus high-fidelity training size.

    One split seed is shared, so the LF-train set (and with it the test
    set) is fixed and the HF subsets are nested prefixes of one
    permutation.  Writes ``sweep_hf.csv`` in long format.
    """
    os.makedirs(out_dir, exist_ok=True)
    comments = [f"config_hash={config_hash}"] if config_hash else []
    labels = []
    reports = []
    rows_out = []
    n_out = high.n_outputs
    for n_hf in hf_sizes:
        split = split_nested(high.n_rows, n_lf, n_hf, split_seed)
        test = split.test_ids
        net, _ = train_net_on_split(high, low, split, net_cfg, plan)
        gp = fit_gp_on_split(high, low, split, gp_cfg)
        rep_net = make_report(
            EMULATOR_NET, high, predict_high_fidelity(net, high.theta[test]), test
        )
        rep_gp = make_report(
            EMULATOR_GP, high, predict_two_level(gp, high.theta[test])[0], test
        )
        labels.append(n_hf)
        reports.append((rep_net, rep_gp))
        for rep in (rep_net, rep_gp):
            for c in range(len(rep.mse)):
                rows_out.append(
                    [n_hf, c // n_out + 1, rep.emulator, rep.frequencies_hz[c],
                     rep.output_dofs[c], rep.mse[c], rep.log_mse[c]]
                )
    csvio.write_csv(
        os.path.join(out_dir, "sweep_hf.csv"),
        ["n_hf", "freq_point", "emulator", "freq_hz", "output_dof", "mse", "log_mse"],
        rows_out,
        comments,
    )
    return StudyReport("hf_sweep", labels, reports)


def run_alpha_sweep(high, low, split, alphas, net_cfg, plan, out_dir, config_hash=""):
    """Composite-net error versus the merge weight alpha.

    Retrains on the same split per grid value.  Writes
    ``sweep_alpha.csv``.
    """
    os.makedirs(out_dir, exist_ok=True)
    comments = [f"config_hash={config_hash}"] if config_hash else []
    labels = []
    reports = []
    rows_out = []
    n_out = high.n_outputs
    for a in alphas:
        plan_a = replace(plan, alpha=float(a))
        cfg_a = replace(net_cfg, alpha=float(a))
        net, _ = train_net_on_split(high, low, split, cfg_a, plan_a)
        rep = make_report(
            EMULATOR_NET, high,
            predict_high_fidelity(net, high.theta[split.test_ids]), split.test_ids,
        )
        labels.append(float(a))
        reports.append(rep)
        for c in range(len(rep.mse)):
            rows_out.append(
                [float(a), c // n_out + 1, rep.frequencies_hz[c], rep.output_dofs[c],
                 rep.mse[c], rep.log_mse[c]]
            )
    csvio.write_csv(
        os.path.join(out_dir, "sweep_alpha.csv"),
        ["alpha", "freq_point", "freq_hz", "output_dof", "mse", "log_mse"],
        rows_out,
        comments,
    )
    return StudyReport("alpha_sweep", labels, reports)
