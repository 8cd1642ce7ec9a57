"""Nonlinear tendencies, pressure, projection and time stepping.

Equations in coefficient space (mu = |eta|^{2 alpha}, N = (v.grad) v):

    d/dt v  + mu v + P N  = P(theta e_d)
    d/dt th + v_d + (v.grad) theta = 0

The linear block (damping, buoyancy, stratification) is advanced exactly with
``linear_core.linear_flow``; the advective terms use explicit midpoint RK2 in
integrating-factor form, which is second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import B, C, SpectralField, Truncation, from_grid, to_grid
from .fields import FlowState, divergence_coeffs
from .linear_core import damping_rate, linear_flow

DEFAULT_CFL = 0.5


class StepSizeError(ValueError):
    pass


Arrays = tuple[np.ndarray, np.ndarray, np.ndarray]


def _safe_inv_eta2(trunc: Truncation) -> np.ndarray:
    """1/|eta|^2 with 0 at eta = 0."""
    e = trunc.eta2
    return np.where(e > 0, 1.0 / np.where(e > 0, e, 1.0), 0.0)


def leray_arrays(trunc: Truncation, wh: np.ndarray, wd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode projection onto i n~ . w_h + q~ w_d = 0; eta = 0 passes through."""
    inv = _safe_inv_eta2(trunc)
    qt = trunc.qtilde
    # scalar potential part: (n~ . w_h - i q~ w_d) / |eta|^2
    s = sum(k * w for k, w in zip(trunc.ntilde, wh)) - 1j * qt * wd
    s = s * inv
    ph = np.stack([w - k * s for k, w in zip(trunc.ntilde, wh)])
    pd = wd - 1j * qt * s
    return ph, pd


def leray_project(w_h, w_d: SpectralField):
    """Apply the projector to (C-fields, B-field); returns the same shapes."""
    tr = w_d.trunc
    ph, pd = leray_arrays(tr, np.stack([f.coeff for f in w_h]), w_d.coeff)
    real = w_d.real and all(f.real for f in w_h)
    return tuple(SpectralField(C, tr, c, real) for c in ph), SpectralField(B, tr, pd, real)


def buoyancy_arrays(trunc: Truncation, th: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P(theta e_d): (i q~ n~ theta / |eta|^2, |n~|^2 theta / |eta|^2)."""
    inv = _safe_inv_eta2(trunc)
    bh = np.stack([1j * trunc.qtilde * k * inv * th for k in trunc.ntilde])
    bd = trunc.nt2 * inv * th
    return bh, bd


# ----------------------------------------------------------------------------
# advection

def _grid(trunc: Truncation, tag: str, coeff: np.ndarray) -> np.ndarray:
    return to_grid(SpectralField(tag, trunc, coeff))


def advection_arrays(trunc: Truncation, vh: np.ndarray, vd: np.ndarray, th: np.ndarray) -> Arrays:
    """Dealiased coefficients of (v.grad) v_h (C), (v.grad) v_d (B), (v.grad) theta (B)."""
    nh = trunc.nh
    qt = trunc.qtilde
    dz_c = -qt  # C -> B vertical derivative factor
    u = [_grid(trunc, C, vh[i]) for i in range(nh)]
    w = _grid(trunc, B, vd)

    def grad_dot(coeff, tag):
        # v . grad f on the grid for f with basis ``tag``
        acc = w * _grid(trunc, C if tag == B else B, (qt if tag == B else dz_c) * coeff)
        for j in range(nh):
            acc = acc + u[j] * _grid(trunc, tag, 1j * trunc.ntilde[j] * coeff)
        return acc

    nvh = np.stack([from_grid(grad_dot(vh[i], C), C, trunc).coeff for i in range(nh)])
    nvd = from_grid(grad_dot(vd, B), B, trunc).coeff
    nth = from_grid(grad_dot(th, B), B, trunc).coeff
    return nvh, nvd, nth


def nonlinear_arrays(trunc: Truncation, vh, vd, th) -> Arrays:
    """(-P (v.grad) v, -(v.grad) theta) in coefficient arrays."""
    nvh, nvd, nth = advection_arrays(trunc, vh, vd, th)
    ph, pd = leray_arrays(trunc, nvh, nvd)
    return -ph, -pd, -nth


def pressure_gradient(state: FlowState):
    """(grad_h P as C-fields, d_d P as a B-field), pressure mean fixed to zero."""
    tr = state.trunc
    vh, vd, th = state.arrays()
    nvh, nvd, _ = advection_arrays(tr, vh, vd, th)
    inv = _safe_inv_eta2(tr)
    qt = tr.qtilde
    nn = sum(k * w for k, w in zip(tr.ntilde, nvh))  # n~ . N_h
    gh = np.stack([
        inv * (-k * nn + 1j * qt * k * nvd - 1j * qt * k * th) for k in tr.ntilde
    ])
    gd = inv * (-1j * qt * nn - qt**2 * nvd + qt**2 * th)
    return tuple(SpectralField(C, tr, c) for c in gh), SpectralField(B, tr, gd)


@dataclass(frozen=True)
class Tendency:
    """Right-hand side split into its physical parts (coefficient arrays)."""

    trunc: Truncation
    nonlinear: Arrays
    buoyancy: Arrays
    linear_stiff: Arrays

    def _total(self, i):
        return self.nonlinear[i] + self.buoyancy[i] + self.linear_stiff[i]

    @property
    def dv_h(self) -> tuple[SpectralField, ...]:
        return tuple(SpectralField(C, self.trunc, c) for c in self._total(0))

    @property
    def dv_d(self) -> SpectralField:
        return SpectralField(B, self.trunc, self._total(1))

    @property
    def dtheta(self) -> SpectralField:
        return SpectralField(B, self.trunc, self._total(2))


def nonlinear_rhs(state: FlowState) -> Tendency:
    tr = state.trunc
    vh, vd, th = state.arrays()
    nl = nonlinear_arrays(tr, vh, vd, th)
    bh, bd = buoyancy_arrays(tr, th)
    mu = damping_rate(tr, state.alpha)
    lin = (-mu * vh, -mu * vd, np.zeros_like(th))
    return Tendency(tr, nl, (bh, bd, -vd), lin)


# ----------------------------------------------------------------------------
# stepping

def velocity_l1(vh: np.ndarray, vd: np.ndarray) -> float:
    return float(np.sum(np.abs(vh)) + np.sum(np.abs(vd)))


def cfl_limit(state: FlowState, cfl: float = DEFAULT_CFL) -> float:
    """Largest dt with dt * max|eta| * ||v||_{l1} <= cfl."""
    vh, vd, _ = state.arrays()
    speed = velocity_l1(vh, vd) * state.trunc.max_eta
    return np.inf if speed == 0 else cfl / speed


def restore_invariants(trunc: Truncation, vh, vd, th) -> Arrays:
    """Re-project, zero the n = 0 part of v_d and restore conjugate symmetry."""
    vh, vd = leray_arrays(trunc, vh, vd)
    vd = np.where(trunc.zero_n, 0.0, vd)
    vd[..., 0] = 0.0
    th = th.copy()
    th[..., 0] = 0.0

    def sym(c):
        r = c
        for ax in range(trunc.nh):
            r = np.flip(r, axis=ax)
        return 0.5 * (c + np.conj(r))

    return np.stack([sym(c) for c in vh]), sym(vd), sym(th)


def _explicit_linear_flow(vh, vd, th, trunc, alpha, t):
    """Damping-only flow used when buoyancy is treated explicitly."""
    em = np.exp(-damping_rate(trunc, alpha) * t)
    return em * vh, em * vd, th


def step(
    state: FlowState,
    dt: float,
    nonlinear: bool = True,
    cfl: float = DEFAULT_CFL,
    explicit_buoyancy: bool = False,
) -> FlowState:
    """One integrating-factor midpoint step of size dt.

    ``explicit_buoyancy`` moves the buoyancy and stratification couplings from
    the exact propagator into the explicit stage (comparison experiments only).
    """
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if nonlinear and dt > cfl_limit(state, cfl) * (1 + 1e-12):
        raise StepSizeError(f"dt={dt:g} violates the CFL bound {cfl_limit(state, cfl):g}")
    tr, alpha = state.trunc, state.alpha
    u = state.arrays()
    flow = _explicit_linear_flow if explicit_buoyancy else linear_flow

    if not nonlinear and not explicit_buoyancy:
        out = flow(*u, tr, alpha, dt)
        return FlowState.from_arrays(tr, alpha, *restore_invariants(tr, *out), state.t + dt)

    def rhs(vh, vd, th):
        if nonlinear:
            fh, fd, ft = nonlinear_arrays(tr, vh, vd, th)
        else:
            fh, fd, ft = np.zeros_like(vh), np.zeros_like(vd), np.zeros_like(th)
        if explicit_buoyancy:
            bh, bd = buoyancy_arrays(tr, th)
            fh, fd, ft = fh + bh, fd + bd, ft - vd
        return fh, fd, ft

    half = 0.5 * dt
    f0 = rhs(*u)
    mid = flow(*(a + half * f for a, f in zip(u, f0)), tr, alpha, half)
    fm = flow(*rhs(*mid), tr, alpha, half)
    base = flow(*u, tr, alpha, dt)
    new = tuple(b + dt * f for b, f in zip(base, fm))
    return FlowState.from_arrays(tr, alpha, *restore_invariants(tr, *new), state.t + dt)


# ----------------------------------------------------------------------------
# conserved quantities

@dataclass(frozen=True)
class Conserved:
    theta_integral: float
    vh_integral: tuple[float, ...]
    max_mean_vd: float


def theta_integral(trunc: Truncation, th: np.ndarray) -> float:
    q = np.arange(trunc.Q + 1)
    odd = q % 2 == 1
    w = np.zeros(trunc.Q + 1)
    w[odd] = 4.0 * (-1.0) ** ((q[odd] - 1) // 2) / (np.pi * q[odd])
    zero = tuple(trunc.N_h for _ in range(trunc.nh))
    return float(np.real(np.sum(th[zero] * w)))


def conserved_quantities(state: FlowState) -> Conserved:
    """Integrals of theta and v_h over the domain and max |v_d(n=0, q)|."""
    tr = state.trunc
    vh, vd, th = state.arrays()
    zero = tuple(tr.N_h for _ in range(tr.nh))
    vh_int = tuple(float(np.real(2.0 * c[zero + (0,)])) for c in vh)
    return Conserved(theta_integral(tr, th), vh_int, float(np.max(np.abs(vd[zero]))))


def max_divergence(state: FlowState) -> float:
    return float(np.max(np.abs(divergence_coeffs(state))))


# ----------------------------------------------------------------------------
# driver

@dataclass
class IntegrationLog:
    dt_history: list[float] = field(default_factory=list)
    max_divergence: float = 0.0
    steps: int = 0


def integrate(
    state: FlowState,
    t_final: float,
    dt_max: float,
    sample_times=(),
    on_sample=None,
    on_step=None,
    nonlinear: bool = True,
    cfl: float = DEFAULT_CFL,
    adaptive: bool = True,
    explicit_buoyancy: bool = False,
    stop=None,
) -> tuple[FlowState, IntegrationLog]:
    """Advance to t_final, landing exactly on every sample time.

    With ``adaptive`` the step is min(dt_max, CFL limit); otherwise dt_max is
    used and a CFL violation raises.  ``on_step(old, new, dt)`` runs after each
    step, ``on_sample(state)`` at each sample time; ``stop(state)`` returning
    True ends the run early.
    """
    log = IntegrationLog()
    targets = sorted(t for t in set(float(s) for s in sample_times) if state.t <= t <= t_final)
    if not targets or targets[-1] < t_final:
        targets.append(float(t_final))
    k = 0
    if targets and targets[0] == state.t:
        if on_sample:
            on_sample(state)
        k = 1
    while k < len(targets):
        target = targets[k]
        dt = dt_max
        if adaptive and nonlinear:
            dt = min(dt, cfl_limit(state, cfl))
        if state.t + dt >= target - 1e-12 * max(1.0, target):
            dt = target - state.t
        new = step(state, dt, nonlinear=nonlinear, cfl=cfl, explicit_buoyancy=explicit_buoyancy)
        if abs(new.t - target) <= 1e-12 * max(1.0, target):
            new = new.replace(t=target)
        log.dt_history.append(dt)
        log.steps += 1
        log.max_divergence = max(log.max_divergence, max_divergence(new))
        if on_step:
            on_step(state, new, dt)
        state = new
        if state.t == target:
            if on_sample:
                on_sample(state)
            k += 1
        if stop is not None and stop(state):
            break
    return state, log
