"""Energies, key-quantity accumulators, the asymptotic profile and slope fits."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .basis import B, Truncation, gram_weight
from .dynamics import advection_arrays
from .fields import FlowState, NormSpec, NormSpecError, norm_weight, sobolev_norm, velocity_norm


class FitError(ValueError):
    pass


class DiagnosticDomainError(ValueError):
    pass


# ----------------------------------------------------------------------------
# energies

def _inhom_weight(trunc: Truncation, tag: str, k: float) -> np.ndarray:
    return gram_weight(trunc, tag) * (1.0 + trunc.eta2) ** k


def energy_sq(state: FlowState, k: float) -> float:
    tr = state.trunc
    total = 0.0
    for f in (*state.velocity, state.theta):
        total += float(np.sum(_inhom_weight(tr, f.tag, k) * np.abs(f.coeff) ** 2))
    return total


def energy_E(state: FlowState, k: float) -> float:
    """(||v||_{H^k}^2 + ||theta||_{H^k}^2)^{1/2}."""
    if k < 0:
        raise DiagnosticDomainError("k must be nonnegative")
    return float(np.sqrt(energy_sq(state, k)))


def complete_homogeneous(variables, degree: int):
    """h_j(x_1..x_r) for j = 0..degree: sum over multi-indices of x^gamma."""
    variables = [np.asarray(x, dtype=float) for x in variables]
    shape = np.broadcast_shapes(*(x.shape for x in variables))
    h = [np.ones(shape)] + [np.zeros(shape) for _ in range(degree)]
    for x in variables:
        new = []
        for j in range(degree + 1):
            acc = np.zeros(shape)
            p = np.ones(shape)
            for l in range(j + 1):
                acc = acc + p * h[j - l]
                p = p * x
            new.append(acc)
        h = new
    return h


def cross_A(state: FlowState, k: int) -> float:
    """sum_{1 <= |gamma| <= k} integral of d^gamma v_d d^gamma theta."""
    if k < 1:
        raise DiagnosticDomainError("cross_A needs k >= 1")
    tr = state.trunc
    squares = [n**2 for n in tr.ntilde] + [tr.qtilde**2]
    h = complete_homogeneous(squares, k)
    symbol = sum(h[1:])
    pair = np.real(state.v_d.coeff * np.conj(state.theta.coeff))
    return float(np.sum(gram_weight(tr, B) * symbol * pair))


# ----------------------------------------------------------------------------
# named norms

FIELDS = ("v", "v_h", "v_d", "theta", "theta_bar")


def field_norm(state: FlowState, name: str, spec: NormSpec) -> float:
    if name == "v":
        return velocity_norm(state, spec)
    if name == "v_h":
        return float(np.sqrt(sum(sobolev_norm(f, spec) ** 2 for f in state.v_h)))
    if name == "v_d":
        return sobolev_norm(state.v_d, spec)
    if name == "theta":
        return sobolev_norm(state.theta, spec)
    if name == "theta_bar":
        return sobolev_norm(state.theta, NormSpec(spec.s, spec.homogeneous, spec.riesz, spec.lam, True))
    raise KeyError(f"unknown field {name!r}; choose from {FIELDS}")


def norm_column(name: str, spec: NormSpec) -> str:
    return f"{name}:{spec.label()}"


# ----------------------------------------------------------------------------
# key quantities and the energy witness

@dataclass
class KeyQuantities:
    """Running integrals of l^1 bounds for |grad v|_inf (K1) and |d_d v_d|_inf (K2)."""

    K1: float = 0.0
    K2: float = 0.0


def key_quantities_step(state: FlowState, dt: float, record: KeyQuantities) -> KeyQuantities:
    tr = state.trunc
    eta = np.sqrt(tr.eta2)
    vh, vd, _ = state.arrays()
    grad = float(np.sum(eta * np.abs(vh)) + np.sum(tr.eta2 * np.abs(vd)))
    ddvd = float(np.sum(tr.qtilde * np.abs(vd)))
    record.K1 += dt * grad
    record.K2 += dt * ddvd
    return record


def dissipation_density(state: FlowState, m: int) -> float:
    """Integrand of the time integrals in the energy witness at one instant."""
    tr = state.trunc
    w = 1.0 + tr.eta2
    if state.alpha == 1:
        wv = tr.eta2 * w**m
        wt = tr.nt2 * w ** (m - 2)
    else:
        wv = w**m
        wt = tr.nt2 * w ** (m - 1)
    vel = sum(float(np.sum(gram_weight(tr, f.tag) * wv * np.abs(f.coeff) ** 2)) for f in state.velocity)
    th = float(np.sum(gram_weight(tr, B) * wt * np.abs(state.theta.coeff) ** 2))
    return vel + th


@dataclass
class EnergyWitness:
    """B_m(T)^2 = sup E_m^2 + integrated dissipation, trapezoid at step resolution."""

    m: int
    sup_energy_sq: float = 0.0
    integral: float = 0.0

    @property
    def value(self) -> float:
        return self.sup_energy_sq + self.integral

    def start(self, state: FlowState) -> None:
        self.sup_energy_sq = max(self.sup_energy_sq, energy_sq(state, self.m))

    def update(self, old: FlowState, new: FlowState, dt: float) -> None:
        self.integral += 0.5 * dt * (dissipation_density(old, self.m) + dissipation_density(new, self.m))
        self.sup_energy_sq = max(self.sup_energy_sq, energy_sq(new, self.m))


# ----------------------------------------------------------------------------
# asymptotic profile

def mean_flux(state: FlowState, nonlinear: bool = True) -> np.ndarray:
    """B-coefficients at n = 0 of (v.grad) theta + v_d, the horizontal-mean flux.

    With ``nonlinear=False`` only v_d contributes (histories of the linear flow).
    """
    tr = state.trunc
    vh, vd, th = state.arrays()
    zero = tuple(tr.N_h for _ in range(tr.nh))
    if not nonlinear:
        return vd[zero].copy()
    _, _, nth = advection_arrays(tr, vh, vd, th)
    return nth[zero] + vd[zero]


def mean_profile(state: FlowState) -> np.ndarray:
    zero = tuple(state.trunc.N_h for _ in range(state.trunc.nh))
    return state.theta.coeff[zero].copy()


@dataclass
class SigmaResult:
    """B-coefficients (n = 0, q = 0..Q) of sigma with a tail-error estimate."""

    coeff: np.ndarray
    tail_error: float
    converged: bool
    horizon: float


def _tail_estimate(times, norms) -> float:
    """Integral over [T, inf) of a power law fitted to the last samples."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if len(t) < 2 or y[-1] == 0.0:
        return 0.0
    keep = t >= t[-1] / 2
    if np.count_nonzero(keep) < 4 or np.any(y[keep] <= 0):
        return np.inf
    slope = stats.linregress(np.log1p(t[keep]), np.log(y[keep])).slope
    if slope >= -1.0:
        return np.inf
    return float(y[-1] * (1.0 + t[-1]) / (-slope - 1.0))


class SigmaAccumulator:
    """Trapezoidal time integral of the mean flux, fed every step."""

    def __init__(self, state0: FlowState, tail_tol: float = 1e-8, nonlinear: bool = True):
        self.initial = mean_profile(state0)
        self.integral = np.zeros_like(self.initial)
        self.tail_tol = tail_tol
        self.nonlinear = nonlinear
        self._last = mean_flux(state0, nonlinear)
        self.times = [state0.t]
        self.flux_norms = [float(np.linalg.norm(self._last))]

    def update(self, new: FlowState, dt: float) -> None:
        flux = mean_flux(new, self.nonlinear)
        self.integral += 0.5 * dt * (self._last + flux)
        self._last = flux
        self.times.append(new.t)
        self.flux_norms.append(float(np.linalg.norm(flux)))

    def result(self) -> SigmaResult:
        tail = _tail_estimate(self.times, self.flux_norms)
        return SigmaResult(self.initial - self.integral, tail, tail <= self.tail_tol, self.times[-1])


def sigma_profile(history, tail_tol: float = 1e-8, nonlinear: bool = True) -> SigmaResult:
    """sigma from a time-ordered sequence of states covering [0, T]."""
    history = list(history)
    if len(history) < 2:
        raise DiagnosticDomainError("sigma needs at least two states")
    acc = SigmaAccumulator(history[0], tail_tol, nonlinear)
    for prev, cur in zip(history, history[1:]):
        acc.update(cur, cur.t - prev.t)
    return acc.result()


def theta_minus_sigma_sq(theta_bar_sq: float, profile: np.ndarray, sigma: np.ndarray) -> float:
    """||theta - sigma||_{L^2}^2 from ||theta_bar||^2 and the n = 0 profile."""
    return float(theta_bar_sq + np.sum(np.abs(profile - sigma) ** 2))


# ----------------------------------------------------------------------------
# fits

@dataclass
class FitResult:
    slope: float
    stderr: float
    window: tuple[float, float]
    samples: int
    predicted: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_decay_exponent(t, y, window=None, min_samples: int = 8) -> FitResult:
    """Least-squares slope of log y against log(1+t) on the window (default [T/10, T])."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        window = (t[-1] / 10.0, t[-1])
    lo, hi = window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    if np.count_nonzero(sel) < min_samples:
        raise FitError(f"need >= {min_samples} samples in window, got {np.count_nonzero(sel)}")
    if np.any(~(y[sel] > 0)):
        raise FitError("decay fit needs positive values")
    res = stats.linregress(np.log1p(t[sel]), np.log(y[sel]))
    return FitResult(float(res.slope), float(res.stderr), (float(lo), float(hi)), int(np.count_nonzero(sel)))


# ----------------------------------------------------------------------------
# run record

def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class RunRecord:
    times: list[float] = field(default_factory=list)
    columns: dict[str, list[float]] = field(default_factory=dict)
    fits: dict[str, dict] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add_sample(self, t: float, values: dict[str, float]) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("sample times must increase")
        if self.times and set(values) != set(self.columns):
            raise ValueError("every sample must provide the same columns")
        self.times.append(float(t))
        for k, v in values.items():
            self.columns.setdefault(k, []).append(float(v))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow(["t", *names])
        for i, t in enumerate(self.times):
            w.writerow([_fmt(t), *(_fmt(self.columns[n][i]) for n in names)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {"times": self.times, "columns": self.columns, "fits": self.fits, "metadata": self.metadata}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=False)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "RunRecord":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text_or_path).read_text()
        d = json.loads(text)
        return cls(list(d["times"]), dict(d["columns"]), dict(d.get("fits", {})), dict(d.get("metadata", {})))


# ----------------------------------------------------------------------------
# collector wired to the integrator callbacks

class Collector:
    """Samples named norms and energies; accumulates key quantities, witness and sigma."""

    def __init__(
        self,
        state0: FlowState,
        norms: list[tuple[str, NormSpec]] = (),
        energies: list[int] = (),
        cross: list[int] = (),
        witness_m: int | None = None,
        track_sigma: bool = False,
        tail_tol: float = 1e-8,
    ):
        self.record = RunRecord()
        self.norms = list(norms)
        self.energies = list(energies)
        self.cross = list(cross)
        self.keys = KeyQuantities()
        self.witness = EnergyWitness(witness_m) if witness_m is not None else None
        if self.witness:
            self.witness.start(state0)
        self.sigma = SigmaAccumulator(state0, tail_tol) if track_sigma else None
        self.profiles: list[np.ndarray] = []
        self.theta_bar_sq: list[float] = []
        self.cross_violations = 0

    def on_step(self, old: FlowState, new: FlowState, dt: float) -> None:
        key_quantities_step(old, dt, self.keys)
        if self.witness:
            self.witness.update(old, new, dt)
        if self.sigma:
            self.sigma.update(new, dt)

    def on_sample(self, state: FlowState) -> None:
        row = {}
        for name, spec in self.norms:
            try:
                row[norm_column(name, spec)] = field_norm(state, name, spec)
            except NormSpecError:
                row[norm_column(name, spec)] = float("nan")
        for k in self.energies:
            row[f"E_{k}"] = energy_E(state, k)
        for k in self.cross:
            a = cross_A(state, k)
            row[f"A_{k}"] = a
            if abs(a) > 0.5 * energy_sq(state, k) * (1 + 1e-12):
                self.cross_violations += 1
        row["K1"] = self.keys.K1
        row["K2"] = self.keys.K2
        if self.witness:
            row[f"B_{self.witness.m}_sq"] = self.witness.value
        if self.sigma:
            self.profiles.append(mean_profile(state))
            self.theta_bar_sq.append(field_norm(state, "theta_bar", NormSpec()) ** 2)
        self.record.add_sample(state.t, row)

    def finish_sigma(self) -> SigmaResult | None:
        """Fix sigma from the whole run and add the theta - sigma column."""
        if not self.sigma:
            return None
        res = self.sigma.result()
        vals = [np.sqrt(theta_minus_sigma_sq(b, p, res.coeff)) for b, p in zip(self.theta_bar_sq, self.profiles)]
        self.record.columns["theta_minus_sigma:L2"] = [float(v) for v in vals]
        self.record.metadata["sigma"] = {
            "tail_error": res.tail_error,
            "converged": res.converged,
            "horizon": res.horizon,
            "l2_norm": float(np.linalg.norm(res.coeff)),
        }
        return res
