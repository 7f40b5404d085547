"""Config-driven orchestration shared by the CLI and the test harness.

Builds the benchmark structure (a wide plate of three square panels in
a row, clamped along the long bottom edge and split into six
half-panel segments), derives the load case, and exposes one function
per stage.  Every stage reads its prerequisites from the output
directory and writes its artifacts back there, so stages can run
separately or via ``run_all``.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import csvio
from .composite_net import (
    CompositeNetConfig,
    TrainingPlan,
    load_composite,
    predict_high_fidelity,
    save_composite,
)
from .config import PipelineConfig
from .dataset import (
    FIDELITY_HIGH,
    FIDELITY_LOW,
    generate_datasets,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_nested,
    summarize,
    write_histogram_csv,
    write_summary_csv,
)
from .errors import DatasetError
from .evaluation import (
    fit_gp_on_split,
    run_alpha_sweep,
    run_comparison,
    run_hf_sweep,
    run_robustness,
    train_net_on_split,
)
from .fem import FrfRequest, MaterialSpec, assemble_segments, natural_frequencies, realize_system
from .guyan import condense, reduced_natural_frequencies, select_masters
from .mesh import BoxRegion, GeometryConfig, HalfSpace, Panel, build_mesh
from .multilevel_gp import GPFitConfig, PSOConfig, load_two_level, predict_two_level, save_two_level
from .sampling import SamplingSpec, lhs_normal_samples

# local (x, y) positions of the two driven points per panel, as fractions
# of the panel edge; the response is observed at the second point of the
# last panel
_FORCE_FRACTIONS = ((0.3, 0.4), (0.7, 0.8))


def build_geometry(model):
    """Three-panel wide plate with six half-panel segment strips.

    The panels sit in a row along x and the long bottom edge (y <= 0)
    is clamped, which packs several bending modes close together; each
    panel is split at its mid-line into two segment strips.
    """
    e = model.panel_edge_m
    t = model.thickness_m
    n = model.elements_per_edge
    nt = model.elements_through
    div = (n, n, nt)
    panels = [Panel((i * e, 0.0, 0.0), (e, e, t), div) for i in range(3)]
    regions = [
        BoxRegion((0.5 * i * e, -1.0, -1.0), (0.5 * (i + 1) * e, e + 1.0, t + 1.0))
        for i in range(6)
    ]
    return GeometryConfig(
        panels=panels,
        segment_regions=regions,
        fixed_node_selectors=[HalfSpace(axis=1, op="<=", value=0.0)],
    )


@dataclass
class ModelBundle:
    """Mesh, segmented matrices and load case built from one config."""

    mesh: object
    material: MaterialSpec
    system: object
    request: FrfRequest
    forced_nodes: list
    output_nodes: list


def build_model(model):
    """Build the benchmark model for a validated model section."""
    geometry = build_geometry(model)
    mesh = build_mesh(geometry)
    material = MaterialSpec(
        young=model.young_pa,
        poisson=model.poisson,
        density=model.density_kgm3,
        a_mass=model.a_mass,
        a_stiff=model.a_stiff,
    )
    system = assemble_segments(mesh, material)

    e = model.panel_edge_m
    t = model.thickness_m
    origins = [(0.0, 0.0), (e, 0.0), (2.0 * e, 0.0)]
    forced_nodes = []
    for ox, oy in origins:
        for fx, fy in _FORCE_FRACTIONS:
            forced_nodes.append(mesh.nearest_node((ox + fx * e, oy + fy * e, t)))
    output_nodes = [forced_nodes[-1]]
    forces = [(mesh.node_dof(nd, 2), model.force_amplitude_n) for nd in forced_nodes]
    output_dofs = np.array([mesh.node_dof(nd, 2) for nd in output_nodes])
    request = FrfRequest(
        frequencies_hz=np.linspace(model.freq_lo_hz, model.freq_hi_hz, model.n_freq),
        forces=forces,
        output_dofs=output_dofs,
    )
    request.validate(mesh.n_dofs)
    return ModelBundle(mesh, material, system, request, forced_nodes, output_nodes)


def nominal_partition(bundle, reduction):
    """Master selection on the nominal system, forced/output DOFs kept."""
    sys0 = realize_system(bundle.system, np.zeros(2 * bundle.system.n_segments))
    required = np.unique(
        np.concatenate(
            [[d for d, _ in bundle.request.forces], bundle.request.output_dofs]
        )
    )
    return select_masters(sys0, reduction.n_masters, required)


def net_config_from(cfg, n_inputs, n_outputs):
    n = cfg.mfdf_cnn
    return CompositeNetConfig(
        n_inputs=n_inputs,
        n_outputs=n_outputs,
        stage1_hidden=n.stage1_hidden,
        linear_hidden=n.linear_hidden,
        nonlinear_hidden=n.nonlinear_hidden,
        alpha=n.alpha,
        standardize=n.standardize,
    )


def training_plan_from(cfg):
    n = cfg.mfdf_cnn
    return TrainingPlan(
        alpha=n.alpha,
        gamma=n.gamma,
        beta_low=n.beta_low,
        beta_high_real=n.beta_high_real,
        beta_high_pseudo=n.beta_high_pseudo,
        epochs=n.epochs,
        batch_size=n.batch_size,
        learning_rate=n.learning_rate,
        loss_form=n.loss_form,
        seed=cfg.stage_seed("mfdf_cnn"),
    )


def gp_config_from(cfg):
    g = cfg.mlmrgp
    return GPFitConfig(
        roughness_lo=g.roughness_lo,
        roughness_hi=g.roughness_hi,
        rho_bound=g.rho_bound,
        grouping=g.grouping,
        jitter=g.jitter,
        pso=PSOConfig(
            particles=g.particles,
            iterations=g.iterations,
            inertia=g.inertia,
            cognitive=g.cognitive,
            social=g.social,
            seed=cfg.stage_seed("mlmrgp"),
        ),
        polish=g.polish,
    )


def _path(out_dir, name):
    return os.path.join(out_dir, name)


def _need(path, hint):
    if not os.path.exists(path):
        raise DatasetError(f"missing {path}; run `vibefuse {hint}` first")
    return path


def stage_mesh(cfg, out_dir):
    """Build the model, report size and paired modal frequencies."""
    os.makedirs(out_dir, exist_ok=True)
    bundle = build_model(cfg.model)
    partition = nominal_partition(bundle, cfg.reduction)
    sys0 = realize_system(bundle.system, np.zeros(2 * bundle.system.n_segments))
    n_modes = cfg.reduction.report_modes
    f_full = natural_frequencies(sys0, n_modes)
    red = condense(sys0, partition)
    f_red = reduced_natural_frequencies(red, n_modes)

    info = {
        "config_hash": cfg.hash,
        "n_nodes": int(len(bundle.mesh.nodes)),
        "n_elements": int(len(bundle.mesh.elements)),
        "n_dofs": int(bundle.mesh.n_dofs),
        "n_masters": int(len(partition.masters)),
        "forced_nodes": [int(v) for v in bundle.forced_nodes],
        "output_nodes": [int(v) for v in bundle.output_nodes],
        "first_mode_hz": repr(float(f_full[0])),
    }
    with open(_path(out_dir, "model_info.json"), "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)

    rows = (
        [i + 1, f_full[i], f_red[i], (f_red[i] - f_full[i]) / f_full[i]]
        for i in range(n_modes)
    )
    csvio.write_csv(
        _path(out_dir, "modes.csv"),
        ["mode", "full_hz", "reduced_hz", "rel_error"],
        rows,
        [f"config_hash={cfg.hash}"],
    )
    return bundle, partition


def stage_sample(cfg, out_dir):
    """Draw the design matrix and persist it."""
    os.makedirs(out_dir, exist_ok=True)
    spec = SamplingSpec(
        dimension=12,
        count=cfg.sampling.count,
        mean=cfg.sampling.mean,
        std=cfg.sampling.std,
        seed=cfg.stage_seed("sampling"),
    )
    theta = lhs_normal_samples(spec)
    header = [f"theta_{i + 1}" for i in range(theta.shape[1])]
    csvio.write_csv(
        _path(out_dir, "samples.csv"), header, (list(row) for row in theta),
        [f"config_hash={cfg.hash}"],
    )
    return theta


def load_samples(out_dir):
    path = _need(_path(out_dir, "samples.csv"), "sample")
    header, rows, _ = csvio.read_csv(path)
    return np.array(rows, dtype=float)


def stage_simulate(cfg, out_dir, jobs=1):
    """Simulate both fidelities over the persisted design."""
    theta = load_samples(out_dir)
    bundle = build_model(cfg.model)
    partition = nominal_partition(bundle, cfg.reduction)
    meta = {
        "config_hash": cfg.hash,
        "sampling_seed": cfg.stage_seed("sampling"),
        "n_masters": int(len(partition.masters)),
    }
    high, low = generate_datasets(
        bundle.system, bundle.request, partition, theta, jobs=jobs, metadata=meta
    )
    save_dataset(high, _path(out_dir, "dataset_high.csv"))
    save_dataset(low, _path(out_dir, "dataset_low.csv"))
    for ds, tag in ((high, FIDELITY_HIGH), (low, FIDELITY_LOW)):
        summary = summarize(ds)
        write_summary_csv(summary, _path(out_dir, f"summary_{tag}.csv"), [f"config_hash={cfg.hash}"])
        write_histogram_csv(summary, _path(out_dir, f"hist_{tag}.csv"), [f"config_hash={cfg.hash}"])
    return high, low


def load_datasets(out_dir):
    high = load_dataset(_need(_path(out_dir, "dataset_high.csv"), "simulate"))
    low = load_dataset(_need(_path(out_dir, "dataset_low.csv"), "simulate"))
    if high.n_rows != low.n_rows or not np.array_equal(high.theta, low.theta):
        raise DatasetError("high/low datasets do not share a design")
    return high, low


def stage_split(cfg, out_dir):
    high, _ = load_datasets(out_dir)
    split = split_nested(
        high.n_rows, cfg.split.lf_train, cfg.split.hf_train, cfg.stage_seed("split")
    )
    save_split(split, _path(out_dir, "split.json"))
    return split


def _load_split(out_dir):
    return load_split(_need(_path(out_dir, "split.json"), "split"))


def stage_train_net(cfg, out_dir):
    high, low = load_datasets(out_dir)
    split = _load_split(out_dir)
    net_cfg = net_config_from(cfg, high.theta.shape[1], high.responses.shape[1])
    plan = training_plan_from(cfg)
    net, history = train_net_on_split(high, low, split, net_cfg, plan)
    save_composite(net, _path(out_dir, "model_mfdfcnn.npz"))
    csvio.write_csv(
        _path(out_dir, "loss_history.csv"),
        ["epoch", "loss"],
        ([i + 1, history[i]] for i in range(len(history))),
        [f"config_hash={cfg.hash}"],
    )
    return net, history


def stage_train_gp(cfg, out_dir):
    high, low = load_datasets(out_dir)
    split = _load_split(out_dir)
    gp = fit_gp_on_split(high, low, split, gp_config_from(cfg))
    save_two_level(gp, _path(out_dir, "model_mlmrgp.json"))
    return gp


def stage_predict(cfg, out_dir):
    """Predict the test rows with both persisted models."""
    high, low = load_datasets(out_dir)
    split = _load_split(out_dir)
    net = load_composite(_need(_path(out_dir, "model_mfdfcnn.npz"), "train mfdf-cnn"))
    gp = load_two_level(_need(_path(out_dir, "model_mlmrgp.json"), "train mlmrgp"))
    x = high.theta[split.test_ids]
    preds = {
        "mfdfcnn": predict_high_fidelity(net, x),
        "mlmrgp": predict_two_level(gp, x)[0],
    }
    for tag, y in preds.items():
        header = ["row_id"] + [f"u_{i + 1}" for i in range(y.shape[1])]
        rows = ([int(rid)] + list(y[k]) for k, rid in enumerate(split.test_ids))
        csvio.write_csv(
            _path(out_dir, f"predictions_{tag}.csv"), header, rows, [f"config_hash={cfg.hash}"]
        )
    return preds


def stage_evaluate(cfg, out_dir):
    """Comparison run; reuses persisted models when they exist."""
    high, low = load_datasets(out_dir)
    split = _load_split(out_dir)
    net_path = _path(out_dir, "model_mfdfcnn.npz")
    gp_path = _path(out_dir, "model_mlmrgp.json")
    net = load_composite(net_path) if os.path.exists(net_path) else None
    gp = load_two_level(gp_path) if os.path.exists(gp_path) else None
    return run_comparison(
        high,
        low,
        split,
        net_config_from(cfg, high.theta.shape[1], high.responses.shape[1]),
        training_plan_from(cfg),
        gp_config_from(cfg),
        out_dir,
        config_hash=cfg.hash,
        curve_seed=cfg.stage_seed("eval"),
        n_curves=cfg.eval.n_curves,
        net=net,
        gp=gp,
    )


def stage_study(cfg, out_dir, which):
    high, low = load_datasets(out_dir)
    net_cfg = net_config_from(cfg, high.theta.shape[1], high.responses.shape[1])
    plan = training_plan_from(cfg)
    if which == "robustness":
        return run_robustness(
            high,
            low,
            cfg.split.lf_train,
            cfg.split.hf_train,
            cfg.stage_seed("split"),
            cfg.eval.robustness_runs,
            net_cfg,
            plan,
            gp_config_from(cfg),
            out_dir,
            config_hash=cfg.hash,
        )
    if which == "hf-fraction":
        return run_hf_sweep(
            high,
            low,
            cfg.split.lf_train,
            cfg.eval.hf_sizes,
            cfg.stage_seed("split"),
            net_cfg,
            plan,
            gp_config_from(cfg),
            out_dir,
            config_hash=cfg.hash,
        )
    if which == "alpha":
        split = _load_split(out_dir)
        return run_alpha_sweep(
            high, low, split, cfg.eval.alpha_grid, net_cfg, plan, out_dir,
            config_hash=cfg.hash,
        )
    raise ValueError(f"unknown study {which!r}")


def run_all(cfg, out_dir, jobs=1):
    """Full pipeline: model, data, splits, training, evaluation, studies."""
    stage_mesh(cfg, out_dir)
    stage_sample(cfg, out_dir)
    stage_simulate(cfg, out_dir, jobs=jobs)
    stage_split(cfg, out_dir)
    stage_train_net(cfg, out_dir)
    stage_train_gp(cfg, out_dir)
    stage_predict(cfg, out_dir)
    stage_evaluate(cfg, out_dir)
    stage_study(cfg, out_dir, "robustness")
    stage_study(cfg, out_dir, "hf-fraction")
    stage_study(cfg, out_dir, "alpha")


def resolve_out_dir(cli_out, cfg):
    """--out flag, then config io.out_dir, then VIBEFUSE_OUT, then ./out."""
    if cli_out:
        return cli_out
    if cfg.io.out_dir:
        return cfg.io.out_dir
    env = os.environ.get("VIBEFUSE_OUT")
    if env:
        return env
    return "out"
