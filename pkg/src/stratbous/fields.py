"""Flow states, weighted spectral norms and state validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import B, C, SpectralField, Truncation, from_grid, gram_weight

SNAPSHOT_FORMAT = "stratbous-state/1"


class NormSpecError(ValueError):
    pass


@dataclass(frozen=True)
class FlowState:
    """(v_h, v_d, theta) at time t; v_h components are C-fields, v_d and theta B-fields."""

    v_h: tuple[SpectralField, ...]
    v_d: SpectralField
    theta: SpectralField
    alpha: int
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "v_h", tuple(self.v_h))
        tr = self.v_d.trunc
        if len(self.v_h) != tr.nh:
            raise ValueError(f"expected {tr.nh} horizontal velocity components")
        if any(f.tag != C for f in self.v_h) or self.v_d.tag != B or self.theta.tag != B:
            raise ValueError("v_h must be C-tagged, v_d and theta B-tagged")
        if any(f.trunc != tr for f in (*self.v_h, self.theta)):
            raise ValueError("all components must share one truncation")
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")

    @property
    def trunc(self) -> Truncation:
        return self.v_d.trunc

    @property
    def velocity(self) -> tuple[SpectralField, ...]:
        return (*self.v_h, self.v_d)

    @classmethod
    def zeros(cls, trunc: Truncation, alpha: int, t: float = 0.0) -> "FlowState":
        return cls(
            tuple(SpectralField.zeros(C, trunc) for _ in range(trunc.nh)),
            SpectralField.zeros(B, trunc),
            SpectralField.zeros(B, trunc),
            alpha,
            t,
        )

    @classmethod
    def from_arrays(cls, trunc, alpha, vh, vd, th, t=0.0) -> "FlowState":
        return cls(
            tuple(SpectralField(C, trunc, c) for c in vh),
            SpectralField(B, trunc, vd),
            SpectralField(B, trunc, th),
            alpha,
            t,
        )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(v_h stacked on a leading axis, v_d, theta) coefficient arrays."""
        return np.stack([f.coeff for f in self.v_h]), self.v_d.coeff, self.theta.coeff

    def replace(self, **kw) -> "FlowState":
        return replace(self, **kw)

    def scaled(self, factor: float) -> "FlowState":
        vh, vd, th = self.arrays()
        return FlowState.from_arrays(self.trunc, self.alpha, factor * vh, factor * vd, factor * th, self.t)


@dataclass(frozen=True)
class NormSpec:
    """Weight |eta|^{2s} (|n~|/|eta|)^{2a} |eta|^{2b}; inhomogeneous uses (1+|eta|^2)^s."""

    s: float = 0.0
    homogeneous: bool = True
    riesz: int = 0
    lam: float = 0.0
    nonzero_n: bool = False

    def __post_init__(self):
        if self.riesz < 0:
            raise NormSpecError("Riesz power must be nonnegative")

    def label(self) -> str:
        base = f"{'' if self.homogeneous else 'in'}hom_s{self.s:g}"
        if self.riesz:
            base += f"_R{self.riesz}"
        if self.lam:
            base += f"_L{self.lam:g}"
        if self.nonzero_n:
            base += "_bar"
        return base


def norm_weight(trunc: Truncation, tag: str, spec: NormSpec) -> np.ndarray:
    """Per-coefficient weight including the Gram factor; inf marks an undefined origin weight."""
    eta2 = trunc.eta2
    nt2 = trunc.nt2
    origin = eta2 == 0
    safe = np.where(origin, 1.0, eta2)
    with np.errstate(invalid="ignore"):
        factor = np.ones(trunc.coeff_shape)
        if spec.homogeneous:
            at_origin = 0.0 if spec.s > 0 else (1.0 if spec.s == 0 else np.inf)
            factor = factor * np.where(origin, at_origin, safe**spec.s)
        else:
            factor = factor * (1.0 + eta2) ** spec.s
        if spec.riesz:
            factor = factor * np.where(origin, 0.0, (nt2 / safe) ** spec.riesz)
        if spec.lam:
            factor = factor * np.where(origin, 0.0 if spec.lam > 0 else np.inf, safe**spec.lam)
        w = gram_weight(trunc, tag) * factor
    # 0 * inf: a vanishing factor (e.g. the empty B slot) wins
    w = np.nan_to_num(w, nan=0.0, posinf=np.inf)
    if spec.nonzero_n:
        w = np.where(trunc.zero_n, 0.0, w)
    return w


def sobolev_norm(f: SpectralField, spec: NormSpec = NormSpec()) -> float:
    """Weighted l^2 norm of the coefficients (equals the L^2 norm for s = 0)."""
    w = norm_weight(f.trunc, f.tag, spec)
    a2 = np.abs(f.coeff) ** 2
    bad = np.isinf(w) & (a2 > 0)
    if np.any(bad):
        raise NormSpecError("negative power applied to a nonzero |eta| = 0 mode")
    w = np.where(np.isinf(w), 0.0, w)
    return float(np.sqrt(np.sum(w * a2)))


def sobolev_norm_sq_arrays(coeff: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sum(weight * np.abs(coeff) ** 2))


def velocity_norm(state: FlowState, spec: NormSpec = NormSpec()) -> float:
    return float(np.sqrt(sum(sobolev_norm(f, spec) ** 2 for f in state.velocity)))


def project_mean_free(f: SpectralField) -> SpectralField:
    """Remove the horizontal mean (zero every n = 0 coefficient)."""
    c = np.where(f.trunc.zero_n, 0.0, f.coeff)
    return f.with_coeff(c)


def linf_l1(f: SpectralField) -> float:
    """l^1 coefficient sum, an upper bound for the sup norm."""
    return float(np.sum(np.abs(f.coeff)))


# ----------------------------------------------------------------------------
# validation

def divergence_coeffs(state: FlowState) -> np.ndarray:
    """C-coefficients of div v: i n~ . v_h + q~ v_d."""
    tr = state.trunc
    div = tr.qtilde * state.v_d.coeff
    for k, f in zip(tr.ntilde, state.v_h):
        div = div + 1j * k * f.coeff
    return div


def _max_even_trace_order(m: int) -> int:
    """Largest even derivative order constrained on X^m (m* in the theory)."""
    return m - 2 if m % 2 == 0 else m - 1


def boundary_traces(values: np.ndarray, trunc: Truncation, max_order: int, points: int = 24) -> list[float]:
    """Estimate |d^{2k} f / dx_d^{2k}| at x_d = +-1 from grid samples.

    A least-squares polynomial is fitted to the ``points`` grid values closest
    to each wall (per horizontal column) and differentiated there.  Returned
    values are relative to max |f|.
    """
    values = np.asarray(values, dtype=float)
    x = 2.0 * np.arange(trunc.M_v + 1) / trunc.M_v - 1.0
    scale = max(float(np.max(np.abs(values))), 1e-300)
    cols = values.reshape(-1, trunc.M_v + 1)
    npts = min(points, trunc.M_v + 1)
    deg = min(npts - 4, 18)
    out = []
    for k in range(0, max_order // 2 + 1):
        worst = 0.0
        for sl, x0 in ((slice(0, npts), -1.0), (slice(-npts, None), 1.0)):
            xs = x[sl]
            for col in cols:
                p = np.polynomial.Polynomial.fit(xs, col[sl], deg)
                worst = max(worst, abs(p.deriv(2 * k)(x0)) if k else abs(col[sl][0 if x0 < 0 else -1]))
        out.append(worst / scale)
    return out


@dataclass
class ValidationReport:
    checks: dict[str, float] = field(default_factory=dict)
    passed: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def add(self, name: str, value: float, tol: float) -> None:
        self.checks[name] = float(value)
        self.passed[name] = bool(value <= tol)

    def __str__(self) -> str:
        return "\n".join(
            f"{'PASS' if self.passed[k] else 'FAIL'} {k}: {v:.3e}" for k, v in self.checks.items()
        )


def validate_state(
    state: FlowState,
    theta_grid: np.ndarray | None = None,
    m: int | None = None,
    tol: float = 1e-10,
    trace_tol: float = 1e-8,
) -> ValidationReport:
    """Check divergence, zero horizontal mean of v_d, reality and wall traces.

    Coefficient-built B-fields satisfy every even-order wall condition by
    construction (each b_q and its even derivatives vanish at x_d = +-1), so
    traces are only estimated when raw grid data ``theta_grid`` is supplied.
    """
    rep = ValidationReport()
    tr = state.trunc
    vscale = max(max(np.max(np.abs(f.coeff)) for f in state.velocity) * tr.max_eta, 1e-300)
    rep.add("divergence", float(np.max(np.abs(divergence_coeffs(state)))) / vscale, tol)
    rep.add("mean_vd", float(np.max(np.abs(state.v_d.coeff[tr.zero_n]), initial=0.0)), tol)
    rep.add(
        "reality",
        max(f.reality_defect() for f in (*state.velocity, state.theta)),
        tol,
    )
    if theta_grid is not None:
        m = 4 + state.alpha if m is None else m
        traces = boundary_traces(theta_grid, tr, _max_even_trace_order(m))
        for k, val in enumerate(traces):
            rep.add(f"trace_d{2 * k}_theta", val, trace_tol)
    return rep


def ingest_grid(
    trunc: Truncation,
    alpha: int,
    v_h_grid,
    v_d_grid,
    theta_grid,
    m: int | None = None,
    trace_tol: float = 1e-8,
) -> FlowState:
    """Physical samples -> validated FlowState; incompatible data is rejected."""
    state = FlowState(
        tuple(from_grid(g, C, trunc) for g in v_h_grid),
        from_grid(v_d_grid, B, trunc),
        from_grid(theta_grid, B, trunc),
        alpha,
    )
    rep = validate_state(state, theta_grid=np.asarray(theta_grid), m=m, tol=1e-8, trace_tol=trace_tol)
    if not rep.ok:
        raise ValueError(f"grid data rejected:\n{rep}")
    return state


# ----------------------------------------------------------------------------
# snapshots

def state_to_dict(state: FlowState, extra: dict | None = None) -> dict:
    """JSON-ready snapshot; coefficient arrays are flattened lexicographically in (n_1, .., q)."""
    tr = state.trunc

    def pack(f: SpectralField):
        return {"tag": f.tag, "re": f.coeff.real.ravel().tolist(), "im": f.coeff.imag.ravel().tolist()}

    out = {
        "format": SNAPSHOT_FORMAT,
        "mode_ordering": "lexicographic in (n_1, ..., n_{d-1}, q); n_i in [-N_h, N_h], q in [0, Q]",
        "d": tr.d,
        "alpha": state.alpha,
        "t": state.t,
        "truncation": {"N_h": tr.N_h, "Q": tr.Q, "M_h": tr.M_h, "M_v": tr.M_v},
        "fields": {
            **{f"v_h{i + 1}": pack(f) for i, f in enumerate(state.v_h)},
            "v_d": pack(state.v_d),
            "theta": pack(state.theta),
        },
    }
    if extra:
        out["metadata"] = extra
    return out


def state_from_dict(data: dict) -> FlowState:
    if data.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"unrecognised snapshot format {data.get('format')!r}")
    t = data["truncation"]
    tr = Truncation(data["d"], t["N_h"], t["Q"], t["M_h"], t["M_v"])

    def unpack(d):
        c = (np.asarray(d["re"]) + 1j * np.asarray(d["im"])).reshape(tr.coeff_shape)
        return SpectralField(d["tag"], tr, c)

    fl = data["fields"]
    return FlowState(
        tuple(unpack(fl[f"v_h{i + 1}"]) for i in range(tr.nh)),
        unpack(fl["v_d"]),
        unpack(fl["theta"]),
        int(data["alpha"]),
        float(data["t"]),
    )


def save_state(state: FlowState, path, extra: dict | None = None) -> None:
    Path(path).write_text(json.dumps(state_to_dict(state, extra)))


def load_state(path) -> FlowState:
    return state_from_dict(json.loads(Path(path).read_text()))
