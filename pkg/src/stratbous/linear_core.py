"""Per-mode linear theory of the (v_d, theta) system d/dt u + M u = 0.

For a B-mode eta = (n~, q~) with r = |n~|^2 / |eta|^2 and mu = |eta|^{2 alpha},

    M = [[mu, -r], [1, 0]],    lambda_pm = (mu +- sqrt(mu^2 - 4 r)) / 2.

The propagator is evaluated in the split form

    e^{-Mt} u0 = e^{-lambda_+ t} u0 + D(t) * (correction),
    D(t) = (e^{-lambda_- t} - e^{-lambda_+ t}) / (lambda_+ - lambda_-),

which stays bounded as lambda_+ -> lambda_- and covers n = 0 (r = 0) without
a special case.  D is computed through phi1(z) = (e^z - 1) / z.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .basis import InvalidModeError, ModeIndex, Truncation
from .fields import FlowState

REGIONS = ("D1", "D2", "D3", "ZeroN")
_SERIES_CUTOFF = 1e-2


class DomainError(ValueError):
    pass


def phi1(z):
    """(e^z - 1) / z, accurate near z = 0; works on complex arrays."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    out = np.expm1(safe) / safe
    # Taylor series to z^6 / 7!, truncation error < 1e-16 for |z| < 1e-2
    zs = np.where(small, z, 0.0)
    series = 1 + zs / 2 * (1 + zs / 3 * (1 + zs / 4 * (1 + zs / 5 * (1 + zs / 6 * (1 + zs / 7)))))
    return np.where(small, series, out)


def divided_exp(lam_minus, lam_plus, t):
    """(e^{-lam_- t} - e^{-lam_+ t}) / (lam_+ - lam_-), cancellation safe."""
    lam_minus = np.asarray(lam_minus, dtype=complex)
    delta = np.asarray(lam_plus, dtype=complex) - lam_minus
    return np.exp(-lam_minus * t) * phi1(-delta * t) * t


def eigenvalues(nt2, eta2, alpha):
    """(lambda_+, lambda_-) for arrays of |n~|^2 and |eta|^2 (eta != 0).

    lambda_- is taken from lambda_+ lambda_- = r to avoid the cancellation
    of the quadratic formula when 4 r << mu^2.
    """
    nt2 = np.asarray(nt2, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    mu = eta2**alpha
    r = nt2 / eta2
    disc = mu**2 - 4 * r
    root = np.sqrt(disc.astype(complex))
    lam_p = 0.5 * (mu + root)
    lam_m = r / lam_p
    return lam_p, lam_m, disc


def region_labels(nt2, eta2, alpha) -> np.ndarray:
    nt2 = np.asarray(nt2, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    mu2 = eta2 ** (2 * alpha)
    disc = mu2 - 4 * nt2 / eta2
    lab = np.where(disc <= 0, "D1", np.where(disc <= 0.25 * mu2, "D2", "D3"))
    return np.where(nt2 == 0, "ZeroN", lab)


@dataclass(frozen=True)
class ModeEigenSystem:
    mode: ModeIndex
    alpha: int
    lambda_plus: complex
    lambda_minus: complex
    a_plus: np.ndarray
    a_minus: np.ndarray
    b_plus: np.ndarray | None
    b_minus: np.ndarray | None
    region: str
    discriminant: float

    @property
    def matrix(self) -> np.ndarray:
        eta2 = self.mode.eta_norm**2
        return np.array([[eta2**self.alpha, -np.sum(self.mode.ntilde**2) / eta2], [1.0, 0.0]])


def eigensystem(mode: ModeIndex, alpha: int) -> ModeEigenSystem:
    """Eigenvalues and the (conjugated) left eigenvectors a_pm with dual rows b_pm."""
    if mode.q < 1:
        raise InvalidModeError("eigensystem needs a B-basis mode (q >= 1)")
    nt2 = float(np.sum(mode.ntilde**2))
    eta2 = mode.eta_norm**2
    lam_p, lam_m, disc = eigenvalues(nt2, eta2, alpha)
    lam_p, lam_m = complex(lam_p), complex(lam_m)
    r = nt2 / eta2
    a_p = np.array([lam_p, -r], dtype=complex)
    a_m = np.array([lam_m, -r], dtype=complex)
    if nt2 > 0:
        k = 1.0 / (lam_p - lam_m)
        b_p = k * np.array([1.0, lam_m / r])
        b_m = k * np.array([-1.0, -lam_p / r])
    else:
        b_p = b_m = None
    region = str(region_labels(nt2, eta2, alpha))
    return ModeEigenSystem(mode, alpha, lam_p, lam_m, a_p, a_m, b_p, b_m, region, float(disc))


def classify_region(mode: ModeIndex, alpha: int) -> str:
    if mode.q < 1:
        raise InvalidModeError("regions are defined on B-basis modes")
    return str(region_labels(np.sum(mode.ntilde**2), mode.eta_norm**2, alpha))


# ----------------------------------------------------------------------------
# propagation

def propagate_arrays(vd0, th0, nt2, eta2, alpha, t):
    """Apply e^{-Mt} mode-wise to coefficient arrays (v_d, theta).

    Entries with eta = 0 are returned unchanged.  Negative t gives the inverse
    flow (used for reversibility checks only).
    """
    eta2 = np.asarray(eta2, dtype=float)
    origin = eta2 == 0
    safe = np.where(origin, 1.0, eta2)
    lam_p, lam_m, _ = eigenvalues(nt2, safe, alpha)
    ep = np.exp(-lam_p * t)
    D = divided_exp(lam_m, lam_p, t)
    r = nt2 / safe
    vd = ep * vd0 - D * (lam_m * vd0 - r * th0)
    th = ep * th0 - D * (vd0 - lam_p * th0)
    # r = 0: e^{-lam_p t} + lam_p D = 1, keep the mean of theta exact
    th = np.where(np.asarray(nt2) == 0, th0 - D * vd0, th)
    vd = np.where(origin, vd0, vd)
    th = np.where(origin, th0, th)
    return vd, th


def propagate_mode(u0, mode: ModeIndex, alpha: int, t: float) -> np.ndarray:
    """e^{-Mt} u0 for u0 = (v_d, theta) at one B-mode."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if mode.q < 1:
        raise InvalidModeError("propagate_mode needs q >= 1")
    u0 = np.asarray(u0, dtype=complex)
    nt2 = float(np.sum(mode.ntilde**2))
    vd, th = propagate_arrays(u0[0], u0[1], nt2, mode.eta_norm**2, alpha, t)
    return np.array([complex(vd), complex(th)])


def damping_rate(trunc: Truncation, alpha: int) -> np.ndarray:
    """|eta|^{2 alpha} per mode, with the alpha = 0 convention |0|^0 = 1."""
    return np.ones(trunc.coeff_shape) if alpha == 0 else trunc.eta2.copy()


def linear_flow(vh, vd, th, trunc: Truncation, alpha: int, t: float):
    """Exact linear evolution of all coefficient arrays over time t.

    v_h obeys d/dt v_h = -mu v_h + i q~ n~ / |eta|^2 theta.  Its n~-component
    differs from i q~ v_d by a quantity that decays like e^{-mu t} for any
    input, which gives the closed form used here without a Duhamel integral.
    """
    vd_t, th_t = propagate_arrays(vd, th, trunc.nt2, trunc.eta2, alpha, t)
    em = np.exp(-damping_rate(trunc, alpha) * t)
    nz = trunc.nt2 > 0
    inv_nt2 = np.where(nz, 1.0 / np.where(nz, trunc.nt2, 1.0), 0.0)
    longitudinal = 1j * trunc.qtilde * (vd_t - em * vd) * inv_nt2
    vh_t = np.stack([em * vh[i] + trunc.ntilde[i] * longitudinal for i in range(trunc.nh)])
    vd_t = np.where(trunc.zero_n, em * vd, vd_t)
    return vh_t, vd_t, th_t


def propagate_linear(state0: FlowState, t: float) -> FlowState:
    """Linearised evolution of a full state (nonlinear terms dropped)."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    vh, vd, th = linear_flow(*state0.arrays(), state0.trunc, state0.alpha, t)
    return FlowState.from_arrays(state0.trunc, state0.alpha, vh, vd, th, state0.t + t)


# ----------------------------------------------------------------------------
# bounds and envelopes

def kernel_bounds(trunc: Truncation, alpha: int, times, rtol: float = 1e-12) -> dict:
    """Count violations of the modal kernel bounds over B-modes and times.

    |e^{-lambda_+ t}| <= e^{-mu t / 2} everywhere; |e^{-lambda_- t}| <=
    e^{-mu t / 2} on D1 and <= e^{-|n~|^2 t / |eta|^{2 + 2 alpha}} elsewhere.
    Moduli are formed as exp(-Re(lambda) t); ``rtol`` absorbs rounding in
    cases where the bound holds with equality.
    """
    nt2, eta2 = trunc.nt2[..., 1:], trunc.eta2[..., 1:]
    lam_p, lam_m, _ = eigenvalues(nt2, eta2, alpha)
    mu = eta2**alpha
    d1 = region_labels(nt2, eta2, alpha) == "D1"
    slow = nt2 / eta2 ** (1 + alpha)
    n_plus = n_minus = 0
    worst = 0.0
    for t in np.atleast_1d(times):
        lhs_p = np.exp(-lam_p.real * t)
        rhs_p = np.exp(-mu * t / 2)
        lhs_m = np.exp(-lam_m.real * t)
        rhs_m = np.where(d1, np.exp(-mu * t / 2), np.exp(-slow * t))
        n_plus += int(np.sum(lhs_p > rhs_p * (1 + rtol)))
        n_minus += int(np.sum(lhs_m > rhs_m * (1 + rtol)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.nanmax(np.where(rhs_m > 0, lhs_m / rhs_m, 0.0))
        worst = max(worst, float(ratio))
    return {"plus_violations": n_plus, "minus_violations": n_minus, "max_minus_ratio": worst}


def singular_constant(trunc: Truncation, alpha: int, t: float) -> float:
    """max over D1 u D2 of |e^{-l_- t} - e^{-l_+ t}| |a_-| |<b_-, e_2>| / e^{-mu t / 4}.

    This is the smallest C for which the singular-combination bound holds at
    time t over the truncation (sup over unit f of |<f, a_->| is |a_-|).
    """
    nt2, eta2 = trunc.nt2[..., 1:], trunc.eta2[..., 1:]
    sel = (nt2 > 0) & np.isin(region_labels(nt2, eta2, alpha), ("D1", "D2"))
    if not np.any(sel):
        return 0.0
    nt2, eta2 = nt2[sel], eta2[sel]
    lam_p, lam_m, _ = eigenvalues(nt2, eta2, alpha)
    r = nt2 / eta2
    mu = eta2**alpha
    a_m = np.sqrt(np.abs(lam_m) ** 2 + r**2)
    D = divided_exp(lam_m, lam_p, t)
    b2 = np.abs(lam_p) / r
    val = np.abs(D) * a_m * b2 / np.exp(-mu * t / 4)
    return float(np.max(val))


def decay_envelope(s: float, m: float, t, alpha: int, kind: str = "theta_bar"):
    """Two-term envelope shape e^{-t/4} + (1+t)^{-p} with unit constants."""
    if s > m or s < 0:
        raise DomainError("need 0 <= s <= m")
    p = (m - s) / (2 * (1 + alpha))
    if kind == "v_d":
        p += 1.0
    elif kind != "theta_bar":
        raise ValueError(f"unknown envelope kind {kind!r}")
    t = np.asarray(t, dtype=float)
    return np.exp(-t / 4) + (1 + t) ** (-p)


def predicted_slope(s: float, m: float, alpha: int, kind: str = "theta_bar") -> float:
    p = (m - s) / (2 * (1 + alpha))
    return -(p + 1.0) if kind == "v_d" else -p


# ----------------------------------------------------------------------------
# eigen table

EIGEN_COLUMNS = ("n", "q", "eta", "disc", "region", "re_lambda_plus", "im_lambda_plus",
                 "re_lambda_minus", "im_lambda_minus")


def eigen_table(trunc: Truncation, alpha: int) -> list[dict]:
    rows = []
    nt2, eta2 = trunc.nt2[..., 1:], trunc.eta2[..., 1:]
    lam_p, lam_m, disc = eigenvalues(nt2, eta2, alpha)
    labels = region_labels(nt2, eta2, alpha)
    for idx in np.ndindex(nt2.shape):
        n = tuple(int(trunc.n_index[i]) for i in idx[:-1])
        rows.append({
            "n": n if len(n) > 1 else n[0],
            "q": idx[-1] + 1,
            "eta": float(np.sqrt(eta2[idx])),
            "disc": float(disc[idx]),
            "region": str(labels[idx]),
            "re_lambda_plus": float(lam_p[idx].real),
            "im_lambda_plus": float(lam_p[idx].imag),
            "re_lambda_minus": float(lam_m[idx].real),
            "im_lambda_minus": float(lam_m[idx].imag),
        })
    return rows


def eigen_table_csv(trunc: Truncation, alpha: int) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EIGEN_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in eigen_table(trunc, alpha):
        row = dict(row)
        if isinstance(row["n"], tuple):
            row["n"] = " ".join(map(str, row["n"]))
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
