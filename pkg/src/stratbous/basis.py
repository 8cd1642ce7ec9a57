"""Mixed Fourier / sine-cosine bases on the strip T^{d-1} x [-1, 1].

Two scalar families are used throughout:

    B_{n,q}(x) = exp(2 pi i n.x_h) b_q(x_d),   q >= 1   (Dirichlet type)
    C_{n,q}(x) = exp(2 pi i n.x_h) c_q(x_d),   q >= 0   (Neumann type)

with b_q = sin(pi q x_d / 2) (q even), cos(pi q x_d / 2) (q odd) and
c_q = cos(pi q x_d / 2) (q even), -sin(pi q x_d / 2) (q odd).

On the shifted coordinate y = (x_d + 1) / 2 in [0, 1] both families are plain
sines/cosines up to a sign, b_q = s_q sin(pi q y) and c_q = s_q cos(pi q y)
with s_q = (-1)^(q // 2), so the vertical transforms are DST-I / DCT-I on the
uniform grid y_j = j / M_v, j = 0..M_v (endpoints included).

Coefficients are expansion coefficients in these functions.  Every basis
function has unit L^2 norm except C_{n,0} (c_0 = 1 has squared norm 2), which
the norm routines account for through :func:`gram_weight`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft

B = "B"
C = "C"
TAGS = (B, C)

_WORKERS: int | None = None


def set_workers(n: int | None) -> None:
    """Number of threads handed to scipy.fft (None = library default)."""
    global _WORKERS
    _WORKERS = n


class InvalidModeError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def vertical_sign(q):
    """Sign s_q with b_q(x_d) = s_q sin(pi q y), c_q(x_d) = s_q cos(pi q y)."""
    q = np.asarray(q)
    return np.where((q // 2) % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class ModeIndex:
    n: tuple[int, ...]
    q: int

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(k) for k in np.atleast_1d(self.n)))
        if self.q < 0:
            raise InvalidModeError(f"q must be nonnegative, got {self.q}")

    @property
    def ntilde(self) -> np.ndarray:
        return 2 * np.pi * np.asarray(self.n, dtype=float)

    @property
    def qtilde(self) -> float:
        return 0.5 * np.pi * self.q

    @property
    def eta_norm(self) -> float:
        return float(np.sqrt(np.sum(self.ntilde**2) + self.qtilde**2))

    def check(self, tag: str) -> None:
        if tag not in TAGS:
            raise InvalidModeError(f"unknown basis tag {tag!r}")
        if tag == B and self.q < 1:
            raise InvalidModeError("B-basis modes require q >= 1")


def evaluate_basis(mode: ModeIndex, tag: str, x) -> complex | np.ndarray:
    """Evaluate B_{n,q} or C_{n,q} at points ``x`` (last axis = d coordinates)."""
    mode.check(tag)
    x = np.asarray(x, dtype=float)
    xh, xd = x[..., :-1], x[..., -1]
    if xh.shape[-1] != len(mode.n):
        raise DimensionError("point dimension does not match the mode")
    phase = np.exp(2j * np.pi * (xh @ np.asarray(mode.n, dtype=float)))
    arg = 0.5 * np.pi * mode.q * xd
    if tag == B:
        vert = np.sin(arg) if mode.q % 2 == 0 else np.cos(arg)
    else:
        vert = np.cos(arg) if mode.q % 2 == 0 else -np.sin(arg)
    return phase * vert


@dataclass(frozen=True)
class Truncation:
    """Mode set |n_i| <= N_h, 0 <= q <= Q and its dealiased collocation grid.

    Grid sizes default to the smallest values satisfying the 3/2 rule,
    M_h >= 3 N_h + 1 and M_v >= 3 Q / 2 + 1.  Grids are built lazily, so very
    large Q is fine for purely modal (linear) work.
    """

    d: int
    N_h: int
    Q: int
    M_h: int | None = None
    M_v: int | None = None

    def __post_init__(self):
        if self.d not in (2, 3):
            raise DimensionError(f"d must be 2 or 3, got {self.d}")
        if self.N_h < 0 or self.Q < 4:
            raise DimensionError("need N_h >= 0 and Q >= 4")
        if self.M_h is None:
            object.__setattr__(self, "M_h", 3 * self.N_h + 1)
        if self.M_v is None:
            object.__setattr__(self, "M_v", math.ceil(1.5 * self.Q) + 1)
        if self.M_h < 3 * self.N_h + 1 or self.M_v < 1.5 * self.Q + 1:
            raise DimensionError(
                f"grid ({self.M_h}, {self.M_v}) too small to dealias "
                f"N_h={self.N_h}, Q={self.Q}"
            )

    @property
    def nh(self) -> int:
        """Number of horizontal axes."""
        return self.d - 1

    @property
    def coeff_shape(self) -> tuple[int, ...]:
        return (2 * self.N_h + 1,) * self.nh + (self.Q + 1,)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.M_h,) * self.nh + (self.M_v + 1,)

    @cached_property
    def n_index(self) -> np.ndarray:
        return np.arange(-self.N_h, self.N_h + 1)

    @cached_property
    def q_index(self) -> np.ndarray:
        return np.arange(self.Q + 1)

    @cached_property
    def ntilde(self) -> tuple[np.ndarray, ...]:
        """Broadcastable 2 pi n_i arrays, one per horizontal axis."""
        out = []
        for i in range(self.nh):
            shape = [1] * (self.nh + 1)
            shape[i] = -1
            out.append((2 * np.pi * self.n_index).reshape(shape).astype(float))
        return tuple(out)

    @cached_property
    def qtilde(self) -> np.ndarray:
        shape = [1] * self.nh + [-1]
        return (0.5 * np.pi * self.q_index).reshape(shape).astype(float)

    @cached_property
    def nt2(self) -> np.ndarray:
        """|n~|^2 broadcast to the coefficient shape."""
        out = np.zeros(self.coeff_shape)
        for k in self.ntilde:
            out = out + k**2
        return out

    @cached_property
    def eta2(self) -> np.ndarray:
        return self.nt2 + self.qtilde**2

    @cached_property
    def zero_n(self) -> np.ndarray:
        return np.broadcast_to(self.nt2 == 0, self.coeff_shape)

    @cached_property
    def max_eta(self) -> float:
        return float(np.sqrt(self.nh * (2 * np.pi * self.N_h) ** 2 + (0.5 * np.pi * self.Q) ** 2))

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        """Grid coordinates: x_h in [0, 1) per axis, then x_d in [-1, 1]."""
        xs = [np.arange(self.M_h) / self.M_h for _ in range(self.nh)]
        xs.append(2.0 * np.arange(self.M_v + 1) / self.M_v - 1.0)
        return tuple(np.meshgrid(*xs, indexing="ij"))

    def mode_slice(self, n: Sequence[int], q: int) -> tuple[int, ...]:
        n = tuple(np.atleast_1d(n))
        if len(n) != self.nh:
            raise DimensionError("wrong number of horizontal indices")
        if any(abs(k) > self.N_h for k in n) or not 0 <= q <= self.Q:
            raise InvalidModeError(f"mode ({n}, {q}) outside truncation")
        return tuple(k + self.N_h for k in n) + (q,)

    def describe(self) -> dict:
        return {
            "d": self.d, "N_h": self.N_h, "Q": self.Q, "M_h": self.M_h, "M_v": self.M_v,
            "vertical_grid": "uniform x_d = 2 j / M_v - 1, j = 0..M_v (endpoints included)",
            "vertical_transforms": "DST-I (B) / DCT-I (C) on y = (x_d + 1) / 2",
        }


def gram_weight(trunc: Truncation, tag: str) -> np.ndarray:
    """Squared L^2 norm of each basis function (2 for C_{n,0}, else 1)."""
    w = np.ones(trunc.coeff_shape)
    if tag == C:
        w[..., 0] = 2.0
    else:
        w[..., 0] = 0.0
    return w


@dataclass(frozen=True)
class SpectralField:
    """Scalar field stored as B- or C-basis coefficients on a truncation.

    ``coeff`` has shape ``trunc.coeff_shape``; axis i < d-1 is indexed by
    n_i + N_h and the last axis by q.  B fields keep their q = 0 slot at zero.
    """

    tag: str
    trunc: Truncation
    coeff: np.ndarray = field(repr=False)
    real: bool = True

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InvalidModeError(f"unknown basis tag {self.tag!r}")
        c = np.asarray(self.coeff, dtype=complex)
        if c.shape != self.trunc.coeff_shape:
            raise DimensionError(f"coefficient shape {c.shape} != {self.trunc.coeff_shape}")
        if self.tag == B:
            c = c.copy()
            c[..., 0] = 0.0
        object.__setattr__(self, "coeff", c)

    @classmethod
    def zeros(cls, tag: str, trunc: Truncation) -> "SpectralField":
        return cls(tag, trunc, np.zeros(trunc.coeff_shape, dtype=complex))

    @classmethod
    def unit(cls, tag: str, trunc: Truncation, n, q: int, value: complex = 1.0) -> "SpectralField":
        ModeIndex(n, q).check(tag)
        c = np.zeros(trunc.coeff_shape, dtype=complex)
        c[trunc.mode_slice(n, q)] = value
        real = not any(np.atleast_1d(n)) and complex(value).imag == 0
        return cls(tag, trunc, c, real=real)

    def with_coeff(self, coeff) -> "SpectralField":
        return SpectralField(self.tag, self.trunc, coeff, self.real)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_compatible(self, other, same_tag=True)
        return SpectralField(self.tag, self.trunc, self.coeff + other.coeff, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "SpectralField":
        real = self.real and np.isrealobj(scalar)
        return SpectralField(self.tag, self.trunc, scalar * self.coeff, real)

    __mul__ = __rmul__

    def conj_reflect(self) -> np.ndarray:
        """coeff(-n, q)^* laid out on the same index grid."""
        c = self.coeff
        for ax in range(self.trunc.nh):
            c = np.flip(c, axis=ax)
        return np.conj(c)

    def reality_defect(self) -> float:
        return float(np.max(np.abs(self.coeff - self.conj_reflect()), initial=0.0))

    def symmetrized(self) -> "SpectralField":
        return SpectralField(self.tag, self.trunc, 0.5 * (self.coeff + self.conj_reflect()), True)


def _check_compatible(f: SpectralField, g: SpectralField, same_tag: bool = False) -> None:
    if f.trunc != g.trunc:
        raise DimensionError("fields live on different truncations")
    if same_tag and f.tag != g.tag:
        raise DimensionError(f"basis tags differ: {f.tag} vs {g.tag}")


# ----------------------------------------------------------------------------
# transforms

def _horizontal_axes(trunc: Truncation) -> tuple[int, ...]:
    return tuple(range(trunc.nh))


def _vertical_to_grid(a: np.ndarray, tag: str, M: int) -> np.ndarray:
    """Sum_q a_q s_q {sin, cos}(pi q j / M) for j = 0..M along the last axis."""
    Q = a.shape[-1] - 1
    a = a * vertical_sign(np.arange(Q + 1))
    out_shape = a.shape[:-1] + (M + 1,)
    if tag == C:
        x = np.zeros(out_shape, dtype=complex)
        x[..., : Q + 1] = 0.5 * a
        x[..., 0] = a[..., 0]
        return sfft.dct(x, type=1, axis=-1, workers=_WORKERS)
    x = np.zeros(a.shape[:-1] + (M - 1,), dtype=complex)
    x[..., :Q] = 0.5 * a[..., 1:]
    out = np.zeros(out_shape, dtype=complex)
    out[..., 1:M] = sfft.dst(x, type=1, axis=-1, workers=_WORKERS)
    return out


def _vertical_from_grid(f: np.ndarray, tag: str, Q: int) -> np.ndarray:
    M = f.shape[-1] - 1
    out = np.zeros(f.shape[:-1] + (Q + 1,), dtype=complex)
    if tag == C:
        c = sfft.idct(f, type=1, axis=-1, workers=_WORKERS)
        out[..., 0] = c[..., 0]
        out[..., 1:] = 2.0 * c[..., 1 : Q + 1]
    else:
        c = sfft.idst(f[..., 1:M], type=1, axis=-1, workers=_WORKERS)
        out[..., 1:] = 2.0 * c[..., :Q]
    return out * vertical_sign(np.arange(Q + 1))


def to_grid(f: SpectralField) -> np.ndarray:
    """Evaluate the finite series on the truncation's collocation grid."""
    tr = f.trunc
    a = _vertical_to_grid(f.coeff, f.tag, tr.M_v)
    if tr.nh:
        full = np.zeros(tr.grid_shape, dtype=complex)
        idx = np.ix_(*[tr.n_index % tr.M_h for _ in range(tr.nh)], np.arange(tr.M_v + 1))
        full[idx] = a
        a = sfft.ifftn(full, axes=_horizontal_axes(tr), norm="forward", workers=_WORKERS)
    return a.real if f.real else a


def from_grid(values: np.ndarray, tag: str, trunc: Truncation, real: bool = True) -> SpectralField:
    """Coefficients of grid data, truncated to the mode set.

    For B-fields the endpoint rows x_d = +-1 are ignored (they must vanish).
    """
    values = np.asarray(values)
    if values.shape != trunc.grid_shape:
        raise DimensionError(f"grid shape {values.shape} != {trunc.grid_shape}")
    f = sfft.fftn(values, axes=_horizontal_axes(trunc), norm="forward", workers=_WORKERS)
    idx = np.ix_(*[trunc.n_index % trunc.M_h for _ in range(trunc.nh)], np.arange(trunc.M_v + 1))
    f = f[idx]
    return SpectralField(tag, trunc, _vertical_from_grid(f, tag, trunc.Q), real)


def transform(data, tag: str | None = None, direction: str = "forward", trunc: Truncation | None = None):
    """Forward (grid -> SpectralField) or inverse (SpectralField -> grid) transform."""
    if direction == "forward":
        if tag is None or trunc is None:
            raise ValueError("forward transform needs tag and truncation")
        return from_grid(data, tag, trunc)
    if direction == "inverse":
        return to_grid(data)
    raise ValueError(f"unknown direction {direction!r}")


# ----------------------------------------------------------------------------
# calculus

def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral derivative; axis < d-1 is horizontal, axis == d-1 is vertical."""
    tr = f.trunc
    if 0 <= axis < tr.nh:
        return SpectralField(f.tag, tr, 1j * tr.ntilde[axis] * f.coeff, f.real)
    if axis != tr.nh:
        raise DimensionError(f"axis {axis} out of range for d={tr.d}")
    if f.tag == B:
        return SpectralField(C, tr, tr.qtilde * f.coeff, f.real)
    c = -tr.qtilde * f.coeff
    c[..., 0] = 0.0
    return SpectralField(B, tr, c, f.real)


def product_tag(tag_f: str, tag_g: str) -> str:
    return B if tag_f != tag_g else C


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased coefficients of the pointwise product f g.

    B x C -> B, B x B -> C, C x C -> C.
    """
    _check_compatible(f, g)
    if not (f.real and g.real):
        raise ValueError("product expects real-valued fields")
    tag = product_tag(f.tag, g.tag)
    return from_grid(to_grid(f) * to_grid(g), tag, f.trunc)
