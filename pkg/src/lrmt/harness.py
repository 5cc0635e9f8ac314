"""Experiment orchestration: named families, CSV emission, slope fitting.

Each family reproduces one of the headline plots or claims at desk scale:
error-vs-iteration races, error-vs-sample-size scaling with the dk/(NT)
theory line, the two-arm ablation, transfer-risk decay, curriculum-vs-pooled
comparisons, and isometry-constant concentration.

Output is a flat CSV with a fixed header and shortest-round-trip float
formatting; given a config and seed list the bytes are reproducible.  Wall
times are measured but written as zero unless timings are switched on, so
that default output stays byte-deterministic.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .curriculum import curriculum_run, make_curriculum, pooled_run
from .errors import ConfigError, InvalidInputError
from .objectives import FactorPair
from .rng import SeededRng
from .solvers import (
    HyperParams,
    SolveResult,
    estimation_error,
    gd_loss1,
    gd_loss2,
    hyperparams_for,
    init_factors,
    nsgd,
    phase2_only,
    tail_average,
    tpgd,
)
from .synth import (
    GroundTruth,
    estimate_rip_delta,
    linear_spectrum,
    make_ground_truth,
    sample_tasks,
    sample_target_stream,
)
from .transfer import default_eta0, excess_risk, make_decay_schedule, sgd_transfer

FAMILIES = ("iter_sweep", "sample_sweep", "ablation", "transfer", "curriculum", "rip_check")
KNOWN_METHODS = ("tpgd", "gd_loss1", "gd_loss2", "nsgd")
ABLATION_ARMS = ("tpgd", "phase1_only", "phase2_only")
THEORY_METHOD = "theory"
THEORY_SEED = -1

CSV_COLUMNS = (
    "family", "method", "seed", "d", "k", "T", "N", "iteration",
    "train_loss", "estimation_error", "balance_gap", "dist_to_target",
    "wall_ms", "diverged",
)

# Dedicated sub-stream ids per seed, so adding a method or family never
# perturbs the draws of another.
_STREAM_GT = 0
_STREAM_INIT = 2
_STREAM_NSGD = 3
_STREAM_TARGET = 6
_STREAM_DATA_BASE = 100
_STREAM_TRANSFER_BASE = 200
_STREAM_PROBE_BASE = 300


@dataclass(frozen=True)
class ExperimentRecord:
    family: str
    method: str
    seed: int
    d: int
    k: int
    t_count: int
    n: int
    iteration: int
    train_loss: float
    estimation_error: float
    balance_gap: float
    dist_to_target: float
    wall_ms: float
    diverged: bool


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class ExperimentConfig:
    """Flat configuration shared by all families (unused fields are ignored)."""

    family: str
    d: int = 20
    k: int = 2
    t_count: int = 40
    kappa: float = 2.0
    sigma_k: float = 1.0
    spectrum: tuple[float, ...] | None = None
    noise_sigma: float = 0.5
    n_values: tuple[int, ...] = (1000,)
    iteration_budget: int | None = None
    methods: tuple[str, ...] = KNOWN_METHODS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    overrides: dict = field(default_factory=dict)
    out: str | None = None
    tail_fraction: float = 0.25
    timings: bool = False
    # transfer family
    k2_values: tuple[int, ...] = (500, 2000, 8000)
    warmup_h: int | None = None
    eta0: float | None = None
    b_hat_mode: str = "star"  # "star": plug in B*; "tpgd": learn it first
    w0_mode: str = "zeros"  # "target" starts at the planted weight (fixed-point check)
    checkpoint_count: int = 50
    # curriculum family
    level_t_counts: tuple[int, ...] = (30, 30)
    level_noise_sigmas: tuple[float, ...] = (0.1, 1.0)
    n_warm: int | None = None
    # rip_check family
    probes: int = 200

    def sigma_star(self) -> np.ndarray:
        if self.spectrum is not None:
            return np.asarray(self.spectrum, dtype=np.float64)
        return linear_spectrum(self.k, self.kappa, self.sigma_k)

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.n_values:
            raise ConfigError("n_values must be non-empty")
        if self.k > self.t_count:
            raise ConfigError(f"need k <= T, got k={self.k}, T={self.t_count}")
        bad = [m for m in self.methods if m not in KNOWN_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected subset of {KNOWN_METHODS}")
        if self.b_hat_mode not in ("star", "tpgd"):
            raise ConfigError(f"b_hat_mode must be 'star' or 'tpgd', got {self.b_hat_mode!r}")
        if self.w0_mode not in ("zeros", "target"):
            raise ConfigError(f"w0_mode must be 'zeros' or 'target', got {self.w0_mode!r}")
        if len(self.level_t_counts) != len(self.level_noise_sigmas):
            raise ConfigError("level_t_counts and level_noise_sigmas must align")


def default_config(family: str) -> ExperimentConfig:
    """Per-family defaults used when no config file value is given."""
    if family == "sample_sweep":
        return ExperimentConfig(family=family, n_values=(250, 500, 1000, 2000))
    if family == "curriculum":
        return ExperimentConfig(family=family, n_values=(600,), seeds=tuple(range(10)))
    if family == "rip_check":
        return ExperimentConfig(
            family=family, d=50, k=2, t_count=4, noise_sigma=0.0,
            n_values=(200, 800, 3200),
        )
    if family == "transfer":
        return ExperimentConfig(family=family, seeds=tuple(range(20)))
    return ExperimentConfig(family=family)


# ---------------------------------------------------------------------------
# config file / overrides

_LIST_INT = {"n_values", "seeds", "k2_values", "level_t_counts"}
_LIST_FLOAT = {"spectrum", "level_noise_sigmas"}
_SCALAR_INT = {"d", "k", "t_count", "iteration_budget", "warmup_h", "n_warm",
               "checkpoint_count", "probes"}
_SCALAR_FLOAT = {"kappa", "sigma_k", "noise_sigma", "tail_fraction", "eta0"}
_SCALAR_STR = {"out", "b_hat_mode", "w0_mode"}
_SCALAR_BOOL = {"timings"}
_HYPER_KEYS = {"eta1", "eta2", "k1", "alpha_tilde"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if key in _LIST_INT:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if key in _LIST_FLOAT:
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if key == "methods":
        return tuple(v for v in raw.replace(",", " ").split())
    if key in _SCALAR_INT:
        return int(raw)
    if key in _SCALAR_FLOAT or key in _HYPER_KEYS:
        return float(raw)
    if key in _SCALAR_BOOL:
        return raw.lower() in ("1", "true", "yes", "on")
    if key in _SCALAR_STR:
        return raw
    raise ConfigError(f"unknown config key {key!r}")


def load_config(family: str, path: str | None = None, cli_overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, the config file section, and CLI values (CLI wins)."""
    cfg = default_config(family)
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        if parser.has_section(family):
            for key, raw in parser.items(family):
                _apply_key(cfg, key, _parse_value(key, raw))
    for key, value in (cli_overrides or {}).items():
        if value is not None:
            _apply_key(cfg, key, value)
    cfg.validate()
    return cfg


def _apply_key(cfg: ExperimentConfig, key: str, value) -> None:
    if value is None:
        return
    if key in _HYPER_KEYS:
        cfg.overrides[key] = value if key != "k1" else int(value)
        return
    if key not in {f.name for f in fields(ExperimentConfig)}:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(cfg, key, value)


# ---------------------------------------------------------------------------
# CSV emission

def _fmt(value) -> str:
    return repr(float(value))


def format_records(records: list[ExperimentRecord]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    ordered = sorted(
        records, key=lambda r: (r.family, r.method, r.seed, r.n, r.iteration)
    )
    for r in ordered:
        lines.append(
            f"{r.family},{r.method},{r.seed},{r.d},{r.k},{r.t_count},{r.n},"
            f"{r.iteration},{_fmt(r.train_loss)},{_fmt(r.estimation_error)},"
            f"{_fmt(r.balance_gap)},{_fmt(r.dist_to_target)},{_fmt(r.wall_ms)},"
            f"{1 if r.diverged else 0}"
        )
    return "\n".join(lines) + "\n"


def write_records(path, records: list[ExperimentRecord]) -> None:
    payload = format_records(records)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(payload)


def read_records(path) -> list[ExperimentRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ",".join(CSV_COLUMNS):
            raise ConfigError(f"{path}: unexpected CSV header")
        out = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise ConfigError(f"{path}: malformed row {line!r}")
            out.append(
                ExperimentRecord(
                    family=parts[0], method=parts[1], seed=int(parts[2]),
                    d=int(parts[3]), k=int(parts[4]), t_count=int(parts[5]),
                    n=int(parts[6]), iteration=int(parts[7]),
                    train_loss=float(parts[8]), estimation_error=float(parts[9]),
                    balance_gap=float(parts[10]), dist_to_target=float(parts[11]),
                    wall_ms=float(parts[12]), diverged=parts[13] == "1",
                )
            )
    return out


# ---------------------------------------------------------------------------
# shared run machinery

def _hyper(cfg: ExperimentConfig, gt: GroundTruth) -> HyperParams:
    overrides = dict(cfg.overrides)
    if cfg.iteration_budget is not None and "k1" not in overrides:
        budget = int(cfg.iteration_budget)
        overrides["k1"] = max(2, budget + (budget % 2))
    return hyperparams_for(gt, overrides=overrides)


def _make_gt(cfg: ExperimentConfig, seed: int) -> GroundTruth:
    return make_ground_truth(
        cfg.d, cfg.k, cfg.t_count, cfg.sigma_star(), cfg.noise_sigma,
        SeededRng(seed, _STREAM_GT),
    )


def _shared_init(cfg: ExperimentConfig, hp: HyperParams, seed: int) -> FactorPair:
    return init_factors(cfg.d, cfg.k, cfg.t_count, hp.alpha_tilde, SeededRng(seed, _STREAM_INIT))


def _run_method(method, data, gt, hp, budget, init, seed, tail_fraction):
    common = dict(init=init.copy(), snapshot_fraction=tail_fraction, raise_on_divergence=False)
    if method == "tpgd":
        run_hp = hp if hp.k1 == budget else replace(hp, k1=budget)
        return tpgd(data, gt, run_hp, SeededRng(seed, _STREAM_INIT), **common)
    if method == "gd_loss1" or method == "phase1_only":
        return gd_loss1(data, gt, hp.eta1, budget, **common)
    if method == "gd_loss2":
        return gd_loss2(data, gt, hp.eta1, budget, **common)
    if method == "phase2_only":
        return phase2_only(data, gt, hp.eta2, budget, **common)
    if method == "nsgd":
        return nsgd(
            data, gt, hp.eta1, budget,
            noise_rng=SeededRng(seed, _STREAM_NSGD), **common,
        )
    raise ConfigError(f"unknown method {method!r}")


def _trajectory_records(cfg, method, seed, n, res: SolveResult) -> list[ExperimentRecord]:
    rows = []
    for p in res.trajectory:
        finite = all(
            math.isfinite(v)
            for v in (p.loss_phase1, p.estimation_error, p.balance_gap, p.dist_to_target)
        )
        rows.append(
            ExperimentRecord(
                family=cfg.family, method=method, seed=seed,
                d=cfg.d, k=cfg.k, t_count=cfg.t_count, n=n,
                iteration=p.iteration, train_loss=p.loss_phase1,
                estimation_error=p.estimation_error, balance_gap=p.balance_gap,
                dist_to_target=p.dist_to_target,
                wall_ms=p.wall_ms if cfg.timings else 0.0,
                diverged=(not finite) or (res.diverged and p.iteration == res.diverged_at),
            )
        )
    return rows


def _final_record(cfg, method, seed, n, res: SolveResult, gt) -> ExperimentRecord:
    last = res.trajectory[-1]
    if method == "tpgd" or res.diverged:
        err = last.estimation_error
    else:
        err = estimation_error(tail_average(res, cfg.tail_fraction), gt)
    return ExperimentRecord(
        family=cfg.family, method=method, seed=seed,
        d=cfg.d, k=cfg.k, t_count=cfg.t_count, n=n,
        iteration=last.iteration, train_loss=last.loss_phase1,
        estimation_error=err, balance_gap=last.balance_gap,
        dist_to_target=last.dist_to_target,
        wall_ms=last.wall_ms if cfg.timings else 0.0,
        diverged=res.diverged,
    )


def fit_power_law(points) -> PowerLawFit:
    """Ordinary least squares of ln y on ln x for positive (x, y) pairs."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise InvalidInputError(f"need at least 3 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise InvalidInputError("power-law fit requires strictly positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return PowerLawFit(slope=float(slope), intercept=float(intercept), r2=float(r2))


def _theory_constant(cfg, tpgd_finals) -> float | None:
    # Least-squares scale for the dk/(NT) law, fitted on converged final errors.
    pairs = [(cfg.d * cfg.k / (n * cfg.t_count), err) for n, err in tpgd_finals
             if math.isfinite(err)]
    if not pairs:
        return None
    sx2 = sum(x * x for x, _ in pairs)
    if sx2 == 0:
        return None
    return sum(x * y for x, y in pairs) / sx2


def _theory_record(cfg, n, iteration, value) -> ExperimentRecord:
    return ExperimentRecord(
        family=cfg.family, method=THEORY_METHOD, seed=THEORY_SEED,
        d=cfg.d, k=cfg.k, t_count=cfg.t_count, n=n, iteration=iteration,
        train_loss=0.0, estimation_error=value, balance_gap=0.0,
        dist_to_target=0.0, wall_ms=0.0, diverged=False,
    )


# ---------------------------------------------------------------------------
# families

def run_iter_sweep(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Per-iteration error traces per method, plus the flat theory line."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    tpgd_finals: list[tuple[int, float]] = []
    budgets: dict[int, int] = {}
    for seed in cfg.seeds:
        gt = _make_gt(cfg, seed)
        hp = _hyper(cfg, gt)
        init = _shared_init(cfg, hp, seed)
        for idx, n in enumerate(cfg.n_values):
            data = sample_tasks(gt, n, SeededRng(seed, _STREAM_DATA_BASE + idx))
            budget = hp.k1
            budgets[n] = budget
            for method in cfg.methods:
                res = _run_method(method, data, gt, hp, budget, init, seed, cfg.tail_fraction)
                records.extend(_trajectory_records(cfg, method, seed, n, res))
                if method == "tpgd" and not res.diverged:
                    tpgd_finals.append((n, res.trajectory[-1].estimation_error))
    c = _theory_constant(cfg, tpgd_finals)
    if c is not None:
        for n in cfg.n_values:
            level = c * cfg.d * cfg.k / (n * cfg.t_count)
            for it in range(budgets[n] + 1):
                records.append(_theory_record(cfg, n, it, level))
    return records


def run_sample_sweep(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Final error per (method, seed, N) at a fixed iteration budget."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    tpgd_finals: list[tuple[int, float]] = []
    budget_used = None
    for seed in cfg.seeds:
        gt = _make_gt(cfg, seed)
        hp = _hyper(cfg, gt)
        init = _shared_init(cfg, hp, seed)
        for idx, n in enumerate(cfg.n_values):
            data = sample_tasks(gt, n, SeededRng(seed, _STREAM_DATA_BASE + idx))
            budget = hp.k1
            budget_used = budget
            for method in cfg.methods:
                res = _run_method(method, data, gt, hp, budget, init, seed, cfg.tail_fraction)
                rec = _final_record(cfg, method, seed, n, res, gt)
                records.append(rec)
                if method == "tpgd" and not res.diverged:
                    tpgd_finals.append((n, rec.estimation_error))
    c = _theory_constant(cfg, tpgd_finals)
    if c is not None and budget_used is not None:
        for n in cfg.n_values:
            records.append(
                _theory_record(cfg, n, budget_used, c * cfg.d * cfg.k / (n * cfg.t_count))
            )
    return records


def run_ablation(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Full two-phase descent vs each phase alone, identical inits and budgets."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    for seed in cfg.seeds:
        gt = _make_gt(cfg, seed)
        hp = _hyper(cfg, gt)
        init = _shared_init(cfg, hp, seed)
        for idx, n in enumerate(cfg.n_values):
            data = sample_tasks(gt, n, SeededRng(seed, _STREAM_DATA_BASE + idx))
            for arm in ABLATION_ARMS:
                res = _run_method(arm, data, gt, hp, hp.k1, init, seed, cfg.tail_fraction)
                records.extend(_trajectory_records(cfg, arm, seed, n, res))
    return records


def run_transfer(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Excess-risk decay of online SGD over the K2 grid; N column carries K2."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    for seed in cfg.seeds:
        gt = _make_gt(cfg, seed)
        h_cov = np.eye(cfg.d)
        if cfg.b_hat_mode == "star":
            b_hat = gt.b_star
        else:
            hp = _hyper(cfg, gt)
            data = sample_tasks(gt, cfg.n_values[0], SeededRng(seed, _STREAM_DATA_BASE))
            b_hat = tpgd(data, gt, hp, SeededRng(seed, _STREAM_INIT)).final.b
        w_target = SeededRng(seed, _STREAM_TARGET).unit_vector(cfg.k)
        eta0 = cfg.eta0 if cfg.eta0 is not None else default_eta0(b_hat, h_cov)
        for idx, k2 in enumerate(cfg.k2_values):
            sched = make_decay_schedule(eta0, k2, h=cfg.warmup_h)
            stream = sample_target_stream(
                gt, w_target, h_cov, k2 - 1, SeededRng(seed, _STREAM_TRANSFER_BASE + idx)
            )
            step = max(1, k2 // cfg.checkpoint_count)
            marks = range(step, k2, step)
            w0 = w_target if cfg.w0_mode == "target" else np.zeros(cfg.k)
            result = sgd_transfer(
                b_hat, stream, sched, w0, marks,
                risk_fn=lambda w: excess_risk(b_hat, w, gt, w_target, h_cov),
            )
            for iteration, risk in result.excess_risk_trace:
                records.append(
                    ExperimentRecord(
                        family=cfg.family, method="sgd_transfer", seed=seed,
                        d=cfg.d, k=cfg.k, t_count=cfg.t_count, n=k2,
                        iteration=iteration, train_loss=0.0,
                        estimation_error=risk, balance_gap=0.0,
                        dist_to_target=0.0, wall_ms=0.0, diverged=False,
                    )
                )
    return records


def run_curriculum(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Curriculum vs pooled training on identical data; iteration 0 rows hold
    the aggregate errors, iteration j >= 1 the per-level ones."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    n = cfg.n_values[0]
    sigma_star = cfg.sigma_star()
    for seed in cfg.seeds:
        hp = hyperparams_for_spectrum(cfg, sigma_star)
        levels = make_curriculum(
            cfg.d, cfg.k, cfg.level_t_counts, sigma_star, cfg.level_noise_sigmas,
            n, SeededRng(seed, _STREAM_GT), n_warm=cfg.n_warm, hp=hp,
        )
        cur = curriculum_run(levels, hp, SeededRng(seed, _STREAM_INIT))
        _, pooled = pooled_run(levels, hp, SeededRng(seed, _STREAM_INIT))
        for method, summary in (("curriculum", cur), ("pooled", pooled)):
            total_t = sum(lv.t_count for lv in levels)
            records.append(
                ExperimentRecord(
                    family=cfg.family, method=method, seed=seed, d=cfg.d, k=cfg.k,
                    t_count=total_t, n=n, iteration=0, train_loss=0.0,
                    estimation_error=summary.aggregate_error, balance_gap=0.0,
                    dist_to_target=0.0, wall_ms=0.0, diverged=False,
                )
            )
            for lv, err in zip(levels, summary.level_errors):
                records.append(
                    ExperimentRecord(
                        family=cfg.family, method=method, seed=seed, d=cfg.d, k=cfg.k,
                        t_count=lv.t_count, n=n, iteration=lv.level_index,
                        train_loss=0.0, estimation_error=err, balance_gap=0.0,
                        dist_to_target=0.0, wall_ms=0.0, diverged=False,
                    )
                )
    return records


def hyperparams_for_spectrum(cfg: ExperimentConfig, sigma_star) -> HyperParams:
    from .solvers import theoretical_hyperparams

    overrides = dict(cfg.overrides)
    if cfg.iteration_budget is not None and "k1" not in overrides:
        budget = int(cfg.iteration_budget)
        overrides["k1"] = max(2, budget + (budget % 2))
    t1 = cfg.level_t_counts[0] if cfg.family == "curriculum" else cfg.t_count
    return theoretical_hyperparams(
        float(sigma_star[0]), float(sigma_star[-1]), cfg.d, cfg.k, t1,
        overrides=overrides,
    )


def run_rip_check(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    """Empirical isometry constants across sample sizes; the delta estimate
    rides in the estimation_error column."""
    cfg.validate()
    records: list[ExperimentRecord] = []
    for seed in cfg.seeds:
        gt = _make_gt(cfg, seed)
        for idx, n in enumerate(cfg.n_values):
            data = sample_tasks(gt, n, SeededRng(seed, _STREAM_DATA_BASE + idx))
            delta = estimate_rip_delta(
                data, cfg.probes, SeededRng(seed, _STREAM_PROBE_BASE + idx)
            )
            records.append(
                ExperimentRecord(
                    family=cfg.family, method="rip", seed=seed, d=cfg.d, k=cfg.k,
                    t_count=cfg.t_count, n=n, iteration=cfg.probes,
                    train_loss=0.0, estimation_error=delta, balance_gap=0.0,
                    dist_to_target=0.0, wall_ms=0.0, diverged=False,
                )
            )
    return records


_RUNNERS = {
    "iter_sweep": run_iter_sweep,
    "sample_sweep": run_sample_sweep,
    "ablation": run_ablation,
    "transfer": run_transfer,
    "curriculum": run_curriculum,
    "rip_check": run_rip_check,
}


def run_family(cfg: ExperimentConfig) -> list[ExperimentRecord]:
    cfg.validate()
    return _RUNNERS[cfg.family](cfg)


def output_path(cfg: ExperimentConfig) -> str:
    out_dir = cfg.out or "."
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, f"{cfg.family}.csv")
