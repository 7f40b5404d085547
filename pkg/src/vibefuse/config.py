"""Pipeline configuration: strict JSON schema, hashing, seed derivation.

Unknown keys are rejected with their path so typos fail loudly.  The
config hash is a SHA-256 prefix of the canonical JSON dump and is
stamped into every artifact; per-stage seeds default to documented
offsets from the global seed when a section leaves its seed null.
"""

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError

_SEED_OFFSETS = {"sampling": 0, "split": 1, "mfdf_cnn": 2, "mlmrgp": 3, "eval": 4}


def _check(d, path, fields):
    """Validate dict ``d`` against {key: (required, types, predicate)}."""
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    out = {}
    for key, (required, types, pred) in fields.items():
        where = f"{path}.{key}"
        if key not in d:
            if required:
                raise ConfigError(f"{where}: missing")
            out[key] = None
            continue
        v = d[key]
        if types is bool:
            ok = isinstance(v, bool)
        elif v is None:
            ok = not required
        else:
            ok = isinstance(v, types) and not isinstance(v, bool)
        if not ok:
            raise ConfigError(f"{where}: expected {getattr(types, '__name__', types)}, got {v!r}")
        if v is not None and pred is not None and not pred(v):
            raise ConfigError(f"{where}: invalid value {v!r}")
        out[key] = v
    return out


_NUM = (int, float)
_POS = lambda v: v > 0
_NONNEG = lambda v: v >= 0
_FRAC = lambda v: 0.0 <= v <= 1.0


@dataclass(frozen=True)
class ModelSection:
    panel_edge_m: float
    thickness_m: float
    elements_per_edge: int
    elements_through: int
    freq_lo_hz: float
    freq_hi_hz: float
    n_freq: int
    young_pa: float
    poisson: float
    density_kgm3: float
    a_mass: float
    a_stiff: float
    force_amplitude_n: float


@dataclass(frozen=True)
class ReductionSection:
    n_masters: int
    report_modes: int


@dataclass(frozen=True)
class SamplingSection:
    count: int
    mean: float
    std: float
    seed: object


@dataclass(frozen=True)
class SplitSection:
    lf_train: int
    hf_train: int
    seed: object


@dataclass(frozen=True)
class NetSection:
    stage1_hidden: tuple
    linear_hidden: tuple
    nonlinear_hidden: tuple
    alpha: float
    gamma: float
    beta_low: float
    beta_high_real: float
    beta_high_pseudo: float
    epochs: int
    batch_size: int
    learning_rate: float
    loss_form: str
    standardize: bool
    seed: object


@dataclass(frozen=True)
class GPSection:
    roughness_lo: float
    roughness_hi: float
    rho_bound: float
    grouping: str
    jitter: float
    particles: int
    iterations: int
    inertia: float
    cognitive: float
    social: float
    polish: bool
    seed: object


@dataclass(frozen=True)
class EvalSection:
    robustness_runs: int
    hf_sizes: tuple
    alpha_grid: tuple
    n_curves: int
    seed: object


@dataclass(frozen=True)
class IoSection:
    out_dir: object


@dataclass
class PipelineConfig:
    seed: int
    model: ModelSection
    reduction: ReductionSection
    sampling: SamplingSection
    split: SplitSection
    mfdf_cnn: NetSection
    mlmrgp: GPSection
    eval: EvalSection
    io: IoSection
    raw: dict = field(repr=False, default_factory=dict)
    hash: str = ""

    def stage_seed(self, stage):
        """Section seed if set, else global seed plus the stage offset."""
        section = getattr(self, stage)
        if section.seed is not None:
            return int(section.seed)
        return int(self.seed) + _SEED_OFFSETS[stage]


def _int_list(v, path, pred=_POS):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}: expected a nonempty list")
    for item in v:
        if not isinstance(item, int) or isinstance(item, bool) or not pred(item):
            raise ConfigError(f"{path}: invalid entry {item!r}")
    return tuple(v)


def _num_list(v, path, pred):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{path}: expected a nonempty list")
    for item in v:
        if not isinstance(item, _NUM) or isinstance(item, bool) or not pred(item):
            raise ConfigError(f"{path}: invalid entry {item!r}")
    return tuple(float(x) for x in v)


def validate_config(raw):
    """Validate a raw dict into a PipelineConfig (hash left empty)."""
    top = _check(
        raw,
        "config",
        {
            "seed": (True, int, None),
            "model": (True, dict, None),
            "reduction": (True, dict, None),
            "sampling": (True, dict, None),
            "split": (True, dict, None),
            "mfdf_cnn": (True, dict, None),
            "mlmrgp": (True, dict, None),
            "eval": (True, dict, None),
            "io": (False, dict, None),
        },
    )

    m = _check(
        raw["model"],
        "config.model",
        {
            "panel_edge_m": (True, _NUM, _POS),
            "thickness_m": (True, _NUM, _POS),
            "elements_per_edge": (True, int, lambda v: v >= 2 and v % 2 == 0),
            "elements_through": (True, int, _POS),
            "freq_lo_hz": (True, _NUM, _POS),
            "freq_hi_hz": (True, _NUM, _POS),
            "n_freq": (True, int, lambda v: v >= 2),
            "young_pa": (True, _NUM, _POS),
            "poisson": (True, _NUM, lambda v: -1.0 < v < 0.5),
            "density_kgm3": (True, _NUM, _POS),
            "a_mass": (True, _NUM, _NONNEG),
            "a_stiff": (True, _NUM, _NONNEG),
            "force_amplitude_n": (True, _NUM, lambda v: v != 0),
        },
    )
    if m["freq_hi_hz"] <= m["freq_lo_hz"]:
        raise ConfigError("config.model: freq_hi_hz must exceed freq_lo_hz")
    model = ModelSection(
        panel_edge_m=float(m["panel_edge_m"]),
        thickness_m=float(m["thickness_m"]),
        elements_per_edge=m["elements_per_edge"],
        elements_through=m["elements_through"],
        freq_lo_hz=float(m["freq_lo_hz"]),
        freq_hi_hz=float(m["freq_hi_hz"]),
        n_freq=m["n_freq"],
        young_pa=float(m["young_pa"]),
        poisson=float(m["poisson"]),
        density_kgm3=float(m["density_kgm3"]),
        a_mass=float(m["a_mass"]),
        a_stiff=float(m["a_stiff"]),
        force_amplitude_n=float(m["force_amplitude_n"]),
    )

    r = _check(
        raw["reduction"],
        "config.reduction",
        {
            "n_masters": (True, int, _POS),
            "report_modes": (True, int, _POS),
        },
    )
    reduction = ReductionSection(r["n_masters"], r["report_modes"])

    s = _check(
        raw["sampling"],
        "config.sampling",
        {
            "count": (True, int, lambda v: v >= 2),
            "mean": (True, _NUM, None),
            "std": (True, _NUM, _POS),
            "seed": (False, int, None),
        },
    )
    sampling = SamplingSection(s["count"], float(s["mean"]), float(s["std"]), s["seed"])

    sp = _check(
        raw["split"],
        "config.split",
        {
            "lf_train": (True, int, _POS),
            "hf_train": (True, int, _POS),
            "seed": (False, int, None),
        },
    )
    if not sp["hf_train"] <= sp["lf_train"] < s["count"]:
        raise ConfigError("config.split: need hf_train <= lf_train < sampling.count")
    split = SplitSection(sp["lf_train"], sp["hf_train"], sp["seed"])

    n = _check(
        raw["mfdf_cnn"],
        "config.mfdf_cnn",
        {
            "stage1_hidden": (True, list, None),
            "linear_hidden": (True, list, None),
            "nonlinear_hidden": (True, list, None),
            "alpha": (True, _NUM, _FRAC),
            "gamma": (True, _NUM, lambda v: 0.0 < v < 1.0),
            "beta_low": (True, _NUM, _POS),
            "beta_high_real": (True, _NUM, _POS),
            "beta_high_pseudo": (True, _NUM, _POS),
            "epochs": (True, int, _POS),
            "batch_size": (True, int, _POS),
            "learning_rate": (True, _NUM, _POS),
            "loss_form": (True, str, lambda v: v in ("separable", "squared_norm_sum")),
            "standardize": (True, bool, None),
            "seed": (False, int, None),
        },
    )
    net = NetSection(
        stage1_hidden=_int_list(n["stage1_hidden"], "config.mfdf_cnn.stage1_hidden"),
        linear_hidden=_int_list(n["linear_hidden"], "config.mfdf_cnn.linear_hidden"),
        nonlinear_hidden=_int_list(n["nonlinear_hidden"], "config.mfdf_cnn.nonlinear_hidden"),
        alpha=float(n["alpha"]),
        gamma=float(n["gamma"]),
        beta_low=float(n["beta_low"]),
        beta_high_real=float(n["beta_high_real"]),
        beta_high_pseudo=float(n["beta_high_pseudo"]),
        epochs=n["epochs"],
        batch_size=n["batch_size"],
        learning_rate=float(n["learning_rate"]),
        loss_form=n["loss_form"],
        standardize=n["standardize"],
        seed=n["seed"],
    )

    g = _check(
        raw["mlmrgp"],
        "config.mlmrgp",
        {
            "roughness_lo": (True, _NUM, _POS),
            "roughness_hi": (True, _NUM, _POS),
            "rho_bound": (True, _NUM, _POS),
            "grouping": (True, str, lambda v: v in ("per_dimension", "segment_pairs")),
            "jitter": (True, _NUM, _NONNEG),
            "particles": (True, int, _POS),
            "iterations": (True, int, _POS),
            "inertia": (True, _NUM, lambda v: 0.0 <= v < 1.0),
            "cognitive": (True, _NUM, _NONNEG),
            "social": (True, _NUM, _NONNEG),
            "polish": (True, bool, None),
            "seed": (False, int, None),
        },
    )
    if g["roughness_hi"] <= g["roughness_lo"]:
        raise ConfigError("config.mlmrgp: roughness_hi must exceed roughness_lo")
    gp = GPSection(
        roughness_lo=float(g["roughness_lo"]),
        roughness_hi=float(g["roughness_hi"]),
        rho_bound=float(g["rho_bound"]),
        grouping=g["grouping"],
        jitter=float(g["jitter"]),
        particles=g["particles"],
        iterations=g["iterations"],
        inertia=float(g["inertia"]),
        cognitive=float(g["cognitive"]),
        social=float(g["social"]),
        polish=g["polish"],
        seed=g["seed"],
    )

    e = _check(
        raw["eval"],
        "config.eval",
        {
            "robustness_runs": (True, int, lambda v: v >= 2),
            "hf_sizes": (True, list, None),
            "alpha_grid": (True, list, None),
            "n_curves": (True, int, _POS),
            "seed": (False, int, None),
        },
    )
    hf_sizes = _int_list(e["hf_sizes"], "config.eval.hf_sizes")
    if list(hf_sizes) != sorted(hf_sizes) or len(set(hf_sizes)) != len(hf_sizes):
        raise ConfigError("config.eval.hf_sizes: must be strictly increasing")
    if hf_sizes[-1] > sp["lf_train"]:
        raise ConfigError("config.eval.hf_sizes: largest size exceeds split.lf_train")
    alpha_grid = _num_list(e["alpha_grid"], "config.eval.alpha_grid", _FRAC)
    evals = EvalSection(e["robustness_runs"], hf_sizes, alpha_grid, e["n_curves"], e["seed"])

    io_raw = raw.get("io", {})
    i = _check(io_raw, "config.io", {"out_dir": (False, str, None)})
    io = IoSection(i["out_dir"])

    return PipelineConfig(
        seed=top["seed"],
        model=model,
        reduction=reduction,
        sampling=sampling,
        split=split,
        mfdf_cnn=net,
        mlmrgp=gp,
        eval=evals,
        io=io,
        raw=raw,
    )


def config_hash(raw):
    """16-hex-digit SHA-256 prefix of the canonical JSON dump."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path, seed_override=None):
    """Parse and validate a config file.

    A seed override replaces the global seed before validation and
    hashing, so artifacts produced under an override are keyed by the
    effective configuration.

    Raises
    ------
    ConfigError
        Parse errors report line and column; validation errors report
        the offending key path.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    cfg = validate_config(raw)
    cfg.hash = config_hash(raw)
    return cfg
