"""Scenario configuration, initial-data generators, canned experiments and reports."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .basis import Truncation
from .diagnostics import Collector, SigmaAccumulator, FitError, RunRecord, energy_E, fit_decay_exponent, norm_column
from .dynamics import restore_invariants, conserved_quantities, integrate
from .fields import FlowState, NormSpec, load_state, validate_state
from .linear_core import predicted_slope, propagate_linear, region_labels

log = logging.getLogger(__name__)

SCENARIOS = (
    "linear_decay",
    "linear_sharpness",
    "conservation",
    "nonlinear_smalldata",
    "sigma_convergence",
    "nonlinear_sharpness",
)
NONLINEAR = {"conservation", "nonlinear_smalldata", "sigma_convergence", "nonlinear_sharpness"}
MIN_SHARP_MODES = 32


class ConfigError(ValueError):
    pass


class InstabilityError(RuntimeError):
    def __init__(self, message: str, record: RunRecord | None = None):
        super().__init__(message)
        self.record = record


# ----------------------------------------------------------------------------
# configuration

@dataclass
class InitialData:
    """generator: sharpness | random_smooth | snapshot."""

    generator: str = "random_smooth"
    epsilon: float = 0.1
    amplitude: float | None = None
    decay: float = 0.5
    mean_velocity: float = 0.0
    velocity_share: float = 0.0
    path: str | None = None


@dataclass
class ScenarioConfig:
    scenario: str = "linear_decay"
    d: int = 2
    alpha: int = 0
    m: int = 4
    N_h: int = 32
    Q: int = 64
    M_h: int | None = None
    M_v: int | None = None
    T_final: float = 200.0
    dt: float = 0.05
    cfl: float = 0.5
    initial: InitialData = field(default_factory=InitialData)
    s_values: list[float] = field(default_factory=lambda: [0.0])
    energies: list[int] = field(default_factory=list)
    cross: list[int] = field(default_factory=list)
    fit_window: list[float] | None = None
    samples: int = 64
    seed: int = 0
    tail_tol: float = 1e-8
    instability_factor: float = 10.0
    compare_linear: bool = False
    out_dir: str = "out"
    plot: bool = True

    def __post_init__(self):
        if isinstance(self.initial, dict):
            try:
                self.initial = InitialData(**self.initial)
            except TypeError as exc:
                raise ConfigError(f"bad initial-data block: {exc}") from exc
        try:
            # YAML reads exponents without a sign (1.0e7) as strings
            for name in ("T_final", "dt", "cfl", "tail_tol", "instability_factor"):
                setattr(self, name, float(getattr(self, name)))
            for name in ("d", "alpha", "m", "N_h", "Q", "samples", "seed"):
                setattr(self, name, int(getattr(self, name)))
            self.s_values = [float(s) for s in self.s_values]
            ini = self.initial
            for name in ("epsilon", "decay", "mean_velocity", "velocity_share"):
                setattr(ini, name, float(getattr(ini, name)))
            if ini.amplitude is not None:
                ini.amplitude = float(ini.amplitude)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric value: {exc}") from exc
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.d not in (2, 3):
            raise ConfigError("d must be 2 or 3")
        if self.alpha not in (0, 1):
            raise ConfigError("alpha must be 0 or 1")
        threshold = (3 if self.alpha == 1 else 2) + self.d / 2
        if not self.m > threshold:
            raise ConfigError(f"m={self.m} must exceed {threshold:g} for alpha={self.alpha}, d={self.d}")
        if self.T_final <= 0 or self.samples < 2:
            raise ConfigError("T_final must be positive and samples >= 2")
        if any(s < 0 or s > self.m for s in self.s_values):
            raise ConfigError("s values must lie in [0, m]")
        if self.initial.generator not in ("sharpness", "random_smooth", "snapshot"):
            raise ConfigError(f"unknown initial-data generator {self.initial.generator!r}")
        if self.initial.generator == "snapshot" and not self.initial.path:
            raise ConfigError("snapshot initial data needs a path")

    @property
    def nonlinear(self) -> bool:
        return self.scenario in NONLINEAR

    def truncation(self) -> Truncation:
        try:
            return Truncation(self.d, self.N_h, self.Q, self.M_h, self.M_v)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(Path(path).read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(data)


# ----------------------------------------------------------------------------
# initial data

def sharpness_mask(trunc: Truncation, alpha: int) -> np.ndarray:
    """Modes in the D3 region with |n| = 1 (q >= 1)."""
    n1 = np.zeros(trunc.coeff_shape, dtype=bool)
    nsq = sum((np.asarray(n) / (2 * np.pi)) ** 2 for n in trunc.ntilde)
    n1 |= np.isclose(nsq, 1.0)
    lab = region_labels(trunc.nt2, np.where(trunc.eta2 > 0, trunc.eta2, 1.0), alpha)
    mask = n1 & (lab == "D3")
    mask[..., 0] = False
    return mask


def sharpness_data(m: float, epsilon: float, alpha: int, trunc: Truncation) -> FlowState:
    """v0 = 0, theta0 = q^{-(m + 1/2 + epsilon)} on D3 with |n| = 1."""
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    mask = sharpness_mask(trunc, alpha)
    distinct = int(np.count_nonzero(mask))
    if distinct < MIN_SHARP_MODES:
        raise ConfigError(f"only {distinct} modes in D3 with |n|=1; enlarge the truncation")
    q = np.broadcast_to(trunc.q_index.astype(float), trunc.coeff_shape)
    th = np.where(mask, np.where(q > 0, q, 1.0) ** (-(m + 0.5 + epsilon)), 0.0).astype(complex)
    state = FlowState.zeros(trunc, alpha).replace(theta=FlowState.zeros(trunc, alpha).theta.with_coeff(th))
    rep = validate_state(state)
    if not rep.ok:
        raise ConfigError(f"sharpness data failed validation:\n{rep}")
    return state


def random_smooth_data(
    trunc: Truncation,
    alpha: int,
    m: float,
    amplitude: float | None = None,
    decay: float = 0.5,
    mean_velocity: float = 0.0,
    seed: int = 0,
) -> FlowState:
    """Random divergence-free data with coefficients ~ N(0,1) e^{-decay |eta|}.

    The horizontal velocity mean is zero unless ``mean_velocity`` is given.
    With ``amplitude`` set, the state is rescaled so that E_m equals it.
    """
    rng = np.random.default_rng(seed)
    shape = trunc.coeff_shape
    env = np.exp(-decay * np.sqrt(trunc.eta2))

    def draw():
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * env

    vh = np.stack([draw() for _ in range(trunc.nh)])
    vd, th = draw(), draw()
    origin = tuple(trunc.N_h for _ in range(trunc.nh)) + (0,)
    for c in vh:
        c[origin] = 0.0
    vh, vd, th = restore_invariants(trunc, vh, vd, th)
    if mean_velocity:
        for c in vh:
            c[origin] = 0.5 * mean_velocity
    state = FlowState.from_arrays(trunc, alpha, vh, vd, th)
    if amplitude is not None:
        state = state.scaled(amplitude / energy_E(state, m))
    return state


def build_initial(cfg: ScenarioConfig, trunc: Truncation) -> FlowState:
    ini = cfg.initial
    if ini.generator == "sharpness":
        state = sharpness_data(cfg.m, ini.epsilon, cfg.alpha, trunc)
        if ini.velocity_share:
            # random smooth velocity with E_m = velocity_share * E_m(theta part)
            rnd = random_smooth_data(trunc, cfg.alpha, cfg.m, None, ini.decay, 0.0, cfg.seed)
            vel = FlowState.from_arrays(trunc, cfg.alpha, rnd.arrays()[0], rnd.arrays()[1], 0 * rnd.arrays()[2])
            vel = vel.scaled(ini.velocity_share * energy_E(state, cfg.m) / energy_E(vel, cfg.m))
            vh, vd, _ = vel.arrays()
            state = FlowState.from_arrays(trunc, cfg.alpha, vh, vd, state.theta.coeff)
        if ini.amplitude is not None:
            state = state.scaled(ini.amplitude / energy_E(state, cfg.m))
        return state
    if ini.generator == "snapshot":
        state = load_state(ini.path)
        if state.trunc != trunc or state.alpha != cfg.alpha:
            raise ConfigError("snapshot truncation or alpha does not match the config")
        return state
    return random_smooth_data(trunc, cfg.alpha, cfg.m, ini.amplitude, ini.decay, ini.mean_velocity, cfg.seed)


def geometric_times(T: float, samples: int = 64) -> np.ndarray:
    """Times uniformly spaced in log(1+t), including 0 and T."""
    t = np.expm1(np.linspace(0.0, math.log1p(T), samples))
    t[0], t[-1] = 0.0, T
    return t


# ----------------------------------------------------------------------------
# scenarios

def _norm_list(cfg: ScenarioConfig) -> list[tuple[str, NormSpec]]:
    out = [("theta_bar", NormSpec(s)) for s in cfg.s_values]
    out += [("v_d", NormSpec(s)) for s in cfg.s_values]
    out += [("v", NormSpec(0.0))]
    if cfg.alpha == 1 and cfg.nonlinear:
        out += [("v", NormSpec(0.0, lam=-0.5))]
    return out


def _fit_columns(cfg: ScenarioConfig, record: RunRecord) -> None:
    window = tuple(cfg.fit_window) if cfg.fit_window else None
    targets = []
    for s in cfg.s_values:
        targets.append((norm_column("theta_bar", NormSpec(s)), predicted_slope(s, cfg.m, cfg.alpha, "theta_bar")))
        targets.append((norm_column("v_d", NormSpec(s)), predicted_slope(s, cfg.m, cfg.alpha, "v_d")))
    targets.append((norm_column("v", NormSpec(0.0)), predicted_slope(0, cfg.m, cfg.alpha) - 0.5))
    # negative-order velocity norm, alpha = 1: rate 3/4 + m/4, logged only
    targets.append((norm_column("v", NormSpec(0.0, lam=-0.5)), -(0.75 + cfg.m / 4)))
    if "theta_minus_sigma:L2" in record.columns:
        targets.append(("theta_minus_sigma:L2", predicted_slope(0, cfg.m, cfg.alpha)))
    for col, pred in targets:
        if col not in record.columns:
            continue
        try:
            fit = fit_decay_exponent(record.times, record.column(col), window)
        except FitError as exc:
            record.fits[col] = {"error": str(exc), "predicted": pred}
            continue
        fit.predicted = pred
        record.fits[col] = fit.to_dict()


def _linear_run(cfg: ScenarioConfig, state0: FlowState) -> RunRecord:
    col = Collector(state0, _norm_list(cfg), cfg.energies, cfg.cross)
    for t in geometric_times(cfg.T_final, cfg.samples):
        col.on_sample(propagate_linear(state0, float(t)))
    return col.record


def _nonlinear_run(cfg: ScenarioConfig, state0: FlowState) -> RunRecord:
    track_sigma = cfg.scenario in ("nonlinear_smalldata", "sigma_convergence", "nonlinear_sharpness")
    col = Collector(
        state0,
        _norm_list(cfg),
        sorted(set(cfg.energies) | {cfg.m}),
        cfg.cross or [cfg.m],
        witness_m=cfg.m,
        track_sigma=track_sigma,
        tail_tol=cfg.tail_tol,
    )
    e0 = energy_E(state0, cfg.m)
    cons0 = conserved_quantities(state0)
    theta_scale = max(abs(cons0.theta_integral), float(np.linalg.norm(state0.theta.coeff)), 1e-300)
    stats = {"theta_drift": 0.0, "vh_drift": 0.0, "mean_vd": cons0.max_mean_vd, "mean_law": 0.0}
    prev = {"cons": cons0}
    half_sigma = []

    def on_step(old, new, dt):
        col.on_step(old, new, dt)
        c = conserved_quantities(new)
        p = prev["cons"]
        stats["theta_drift"] = max(stats["theta_drift"], abs(c.theta_integral - p.theta_integral) / theta_scale)
        if cfg.alpha == 1:
            scale = max(max(abs(x) for x in cons0.vh_integral), 1e-300)
            stats["vh_drift"] = max(stats["vh_drift"], max(abs(a - b) for a, b in zip(c.vh_integral, p.vh_integral)) / scale)
        elif new.t <= 5.0 + 1e-12:
            for a0, a in zip(cons0.vh_integral, c.vh_integral):
                if a0 != 0:
                    stats["mean_law"] = max(stats["mean_law"], abs(a / (a0 * math.exp(-new.t)) - 1.0))
        stats["mean_vd"] = max(stats["mean_vd"], c.max_mean_vd)
        prev["cons"] = c
        if cfg.scenario == "sigma_convergence":
            half_sigma.append(new)

    def stop(state):
        return cfg.scenario != "conservation" and energy_E(state, cfg.m) > cfg.instability_factor * e0

    final, ilog = integrate(
        state0,
        cfg.T_final,
        cfg.dt,
        geometric_times(cfg.T_final, cfg.samples),
        on_sample=col.on_sample,
        on_step=on_step,
        nonlinear=True,
        cfl=cfg.cfl,
        stop=stop,
    )
    rec = col.record
    rec.metadata["integration"] = {
        "steps": ilog.steps,
        "max_divergence": ilog.max_divergence,
        "dt_min": min(ilog.dt_history),
        "dt_max": max(ilog.dt_history),
        "final_time": final.t,
    }
    rec.metadata["conservation"] = stats
    rec.metadata["witness"] = {
        "initial_energy_sq": e0**2,
        "B_m_sq": col.witness.value,
        "ratio": col.witness.value / e0**2 if e0 else 0.0,
        "cross_violations": col.cross_violations,
    }
    rec.metadata["key_quantities"] = {"K1": col.keys.K1, "K2": col.keys.K2}
    if stop(final):
        raise InstabilityError(f"E_m grew beyond {cfg.instability_factor}x its initial value by t={final.t:g}", rec)
    if col.sigma:
        res = col.finish_sigma()
        if cfg.scenario == "sigma_convergence":
            coarse = SigmaAccumulator(state0, cfg.tail_tol)
            last_t = state0.t
            for st in half_sigma[1::2]:
                coarse.update(st, st.t - last_t)
                last_t = st.t
            change = abs(np.linalg.norm(coarse.result().coeff) - np.linalg.norm(res.coeff))
            rec.metadata["sigma"]["half_density_change"] = float(change)
    if cfg.compare_linear:
        rec.metadata["compare_linear"] = _linear_deviation(cfg, state0, final)
    return rec


def _linear_deviation(cfg: ScenarioConfig, state0: FlowState, final: FlowState) -> dict:
    """E_m distance between the nonlinear endpoint and the linear flow of the same data."""
    lin = propagate_linear(state0, final.t)
    diff = FlowState.from_arrays(
        final.trunc, final.alpha, *(a - b for a, b in zip(final.arrays(), lin.arrays())), final.t
    )
    return {"t": final.t, "E_m_deviation": energy_E(diff, cfg.m), "E_m_initial": energy_E(state0, cfg.m)}


def run_scenario(cfg: ScenarioConfig) -> RunRecord:
    """Build the data, integrate, sample diagnostics and fit slopes.

    Raises InstabilityError (carrying the partial record) when E_m grows by
    more than ``instability_factor`` in a nonlinear scenario.
    """
    trunc = cfg.truncation()
    state0 = build_initial(cfg, trunc)
    log.info("scenario %s: %s, E_m(0)=%.3e", cfg.scenario, trunc.describe(), energy_E(state0, cfg.m))
    rec = _nonlinear_run(cfg, state0) if cfg.nonlinear else _linear_run(cfg, state0)
    rec.metadata["config"] = cfg.to_dict()
    rec.metadata["truncation"] = trunc.describe()
    rec.metadata["initial_energy_m"] = energy_E(state0, cfg.m)
    _fit_columns(cfg, rec)
    return rec


# ----------------------------------------------------------------------------
# reports

def plot_record(record: RunRecord, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cfg = record.metadata.get("config", {})
    t = np.asarray(record.times)
    fig, ax = plt.subplots(figsize=(7, 5))
    keep = t > 0
    for name, vals in record.columns.items():
        if ":" not in name:
            continue
        y = np.asarray(vals)
        ok = keep & (y > 0)
        if not np.any(ok):
            continue
        line, = ax.loglog(1 + t[ok], y[ok], label=name)
        fit = record.fits.get(name, {})
        if "slope" in fit:
            line.set_label(f"{name} (slope {fit['slope']:.3f})")
    if cfg and np.any(keep):
        m, alpha = cfg["m"], cfg["alpha"]
        ref_t = 1 + t[keep]
        for s in cfg.get("s_values", [0.0]):
            for kind in ("theta_bar", "v_d"):
                p = predicted_slope(s, m, alpha, kind)
                ax.loglog(ref_t, (ref_t / ref_t[0]) ** p, "k:", lw=0.8)
                ax.annotate(f"{p:.2f}", (ref_t[-1], (ref_t[-1] / ref_t[0]) ** p), fontsize=7)
    ax.set_xlabel("1 + t")
    ax.set_ylabel("norm")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def emit_report(record: RunRecord, out_dir, plot: bool = True) -> dict[str, Path]:
    """Write record.csv, record.json and (optionally) decay.png into out_dir."""
    if not record.times:
        raise ValueError("empty record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "record.csv", "json": out / "record.json"}
    record.to_csv(paths["csv"])
    record.to_json(paths["json"])
    if plot:
        paths["plot"] = out / "decay.png"
        plot_record(record, paths["plot"])
    return paths
