"""Exponent arithmetic for the boundedness classification, Young-function
algebra, Orlicz averages, and the Holder / BMO / Campanato seminorm suite.

Seminorms are suprema over infinitely many cubes or point pairs; every
routine here replaces them with a declared finite family and returns a
reproducible lower bound.  Reports downstream record the family used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import EmptyIntersectionError, InvalidExponentError, UnsupportedYoungError
from .grid import ComplexGrid, Cube, GridFunction, cube_average, cube_overlap

__all__ = [
    "ExponentData",
    "exponent_data",
    "YoungFunction",
    "young_eval",
    "young_inverse",
    "associate_young",
    "associate_identity_constants",
    "BpqReport",
    "bpq_check",
    "orlicz_average",
    "default_cube_family",
    "default_pair_sample",
    "holder_seminorm",
    "campanato_seminorm",
    "bmo_seminorm",
    "orlicz_campanato_seminorm",
]


# ----------------------------------------------------------------------------
# exponent classification


@dataclass(frozen=True)
class ExponentData:
    """Derived exponents for the commutator boundedness classification.

    beta = 2*(1/p - 1/q - 1/2) selects the symbol class: constants for
    beta > 1, a Holder class for beta in (0, 1], BMO at beta = 0, and a
    Campanato space for beta < 0 with phi = max(p', q) and
    lambda = 2 + beta * phi.  The boundary flag marks p' = q, where only a
    partial characterization is available.
    """

    p: float
    q: float
    p_prime: float
    beta: float
    phi: float
    lam: float
    case_tag: str
    boundary_flag: bool


def exponent_data(p: float, q: float) -> ExponentData:
    if not (1 < p < 2 < q):
        raise InvalidExponentError(f"need 1 < p < 2 < q, got p={p}, q={q}")
    p_prime = p / (p - 1)
    beta = 2.0 * (1.0 / p - 1.0 / q - 0.5)
    phi = max(p_prime, q)
    lam = 2.0 + beta * phi
    if beta > 1:
        tag = "constant"
    elif beta > 0:
        tag = "hoelder"
    elif beta == 0:
        tag = "bmo"
    else:
        tag = "campanato"
    return ExponentData(
        p=p,
        q=q,
        p_prime=p_prime,
        beta=beta,
        phi=phi,
        lam=lam,
        case_tag=tag,
        boundary_flag=abs(p_prime - q) < 1e-12,
    )


# ----------------------------------------------------------------------------
# Young functions


@dataclass(frozen=True)
class YoungFunction:
    """A parametric Young function: t^r, or t^r * log(e+t)^s.

    Negative s is allowed only as an associate-approximation descriptor
    (the function is then no longer convex near the origin); such instances
    skip the convexity self-check.
    """

    kind: str  # "power" | "power_log"
    r: float
    s: float = 0.0

    def __post_init__(self):
        if self.kind not in ("power", "power_log"):
            raise UnsupportedYoungError(f"unknown Young kind {self.kind!r}")
        if self.r <= 1:
            raise ValueError(f"Young exponent must exceed 1, got r={self.r}")
        if self.kind == "power" and self.s != 0.0:
            raise ValueError("power kind takes no log exponent")
        self._self_check()

    @property
    def descriptor_only(self) -> bool:
        return self.s < 0

    @classmethod
    def power(cls, r: float) -> "YoungFunction":
        return cls("power", r)

    @classmethod
    def power_log(cls, r: float, s: float) -> "YoungFunction":
        return cls("power_log", r, s)

    @classmethod
    def parse(cls, spec: str) -> "YoungFunction":
        parts = spec.split(":")
        if parts[0] == "pow" and len(parts) == 2:
            return cls.power(float(parts[1]))
        if parts[0] == "powlog" and len(parts) == 3:
            return cls.power_log(float(parts[1]), float(parts[2]))
        raise UnsupportedYoungError(f"cannot parse Young descriptor {spec!r}")

    def describe(self) -> str:
        if self.kind == "power":
            return f"pow:{self.r:g}"
        return f"powlog:{self.r:g}:{self.s:g}"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("Young functions are defined on [0, inf)")
        if self.kind == "power":
            return t**self.r
        return t**self.r * np.log(np.e + t) ** self.s

    def _self_check(self) -> None:
        # increasing, A(0) = 0, superlinear; convexity via second differences
        ts = np.logspace(-3, 6, 40)
        vals = self(ts)
        if not np.all(np.diff(vals) > 0):
            raise ValueError(f"{self.describe()} is not increasing on the check grid")
        if self(0.0) != 0.0:
            raise ValueError(f"{self.describe()} does not vanish at 0")
        if vals[-1] / ts[-1] < vals[0] / ts[0]:
            raise ValueError(f"{self.describe()} is not superlinear")
        if not self.descriptor_only:
            xs = np.linspace(0.0, 10.0, 201)
            ys = self(xs)
            if np.any(ys[2:] + ys[:-2] - 2 * ys[1:-1] < -1e-9):
                raise ValueError(f"{self.describe()} fails the convexity check")


def young_eval(A: YoungFunction, t: float) -> float:
    if t < 0:
        raise ValueError(f"Young argument must be nonnegative, got {t}")
    return float(A(t))


def young_inverse(A: YoungFunction, y: float, rel_tol: float = 1e-12) -> float:
    """Inverse by bracketed bisection to the requested relative tolerance."""
    if y < 0:
        raise ValueError(f"inverse argument must be nonnegative, got {y}")
    if y == 0.0:
        return 0.0
    hi = 1.0
    while young_eval(A, hi) < y:
        hi *= 2.0
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while lo > 0 and young_eval(A, lo) > y:
        hi = lo
        lo /= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if young_eval(A, mid) < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * hi:
            break
    return 0.5 * (lo + hi)


def associate_young(A: YoungFunction) -> YoungFunction:
    """Descriptor of the associate function, normalized so that
    t <= A^{-1}(t) * Abar^{-1}(t) <= 2t holds up to a bounded constant.

    For a pure power the associate is the conjugate power (the identity is
    then exact).  For t^r * log(e+t)^s the log exponent of the associate is
    -s * r'/r, which cancels the logarithm in the product of inverses; the
    equivalence constants on a log grid are available from
    :func:`associate_identity_constants`.
    """
    r_conj = A.r / (A.r - 1.0)
    if A.kind == "power":
        return YoungFunction.power(r_conj)
    if A.kind == "power_log":
        return YoungFunction.power_log(r_conj, -A.s * r_conj / A.r)
    raise UnsupportedYoungError(f"no associate rule for {A.kind!r}")


def associate_identity_constants(
    A: YoungFunction,
    Abar: Optional[YoungFunction] = None,
    t_lo: float = 1e-3,
    t_hi: float = 1e6,
    n: int = 60,
) -> tuple[float, float]:
    """Range of A^{-1}(t) * Abar^{-1}(t) / t over a log grid."""
    if Abar is None:
        Abar = associate_young(A)
    ts = np.logspace(math.log10(t_lo), math.log10(t_hi), n)
    ratios = [young_inverse(A, t) * young_inverse(Abar, t) / t for t in ts]
    return float(min(ratios)), float(max(ratios))


@dataclass(frozen=True)
class BpqReport:
    converges: bool
    integral_estimate: float
    tail_exponent: float
    critical: bool  # power part exactly p: the log factor decides


def bpq_check(A: YoungFunction, p: float, q: float, t_max: float = 1e6) -> BpqReport:
    """Integrability test of A(t)^(q/p) * t^(-q-1) on [1, inf).

    The integral on [1, t_max] is estimated by adaptive quadrature in log
    coordinates; convergence of the tail is classified from the descriptor:
    the integrand decays like t^(r*q/p - q - 1) times a log power, so the
    tail converges iff r < p, or r = p with the log exponent s*q/p < -1.
    """
    if not (1 < p <= q):
        raise InvalidExponentError(f"need 1 < p <= q, got p={p}, q={q}")
    if t_max < 1e3:
        raise ValueError(f"t_max must be at least 1e3, got {t_max}")
    qp = q / p
    tail_exp = A.r * qp - q - 1.0
    critical = A.r == p
    if A.r < p:
        converges = True
    elif critical:
        converges = A.s * qp < -1.0
    else:
        converges = False

    def integrand(u: float) -> float:  # t = e^u
        t = math.exp(u)
        return float(A(t)) ** qp * math.exp(-q * u)

    estimate, _ = quad(integrand, 0.0, math.log(t_max), limit=200)
    return BpqReport(
        converges=converges, integral_estimate=float(estimate), tail_exponent=tail_exp, critical=critical
    )


# ----------------------------------------------------------------------------
# Orlicz averages


def _orlicz_average_weighted(mags: np.ndarray, weights: np.ndarray, area: float, A: YoungFunction) -> float:
    """Luxemburg-style infimum of lam with (1/area) * sum A(mags/lam) * w <= 1."""
    peak = float(mags.max(initial=0.0, where=weights > 0)) if mags.size else 0.0
    if peak == 0.0:
        return 0.0

    def constraint(lam: float) -> float:
        return float(np.sum(A(mags / lam) * weights)) / area

    hi = peak
    for _ in range(200):
        if constraint(hi) <= 1.0:
            break
        hi *= 2.0
    else:
        raise ArithmeticError("failed to bracket the Orlicz average from above")
    lo = hi / 2.0
    while constraint(lo) <= 1.0:
        hi = lo
        lo /= 2.0
        if lo < peak * 1e-300:
            return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if constraint(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-11 * hi:
            break
    return hi


def orlicz_average(f: GridFunction, Q: Cube, A: YoungFunction) -> float:
    """Orlicz average: the infimum of lam > 0 with avg_Q A(|f|/lam) <= 1.

    For A(t) = t^p this reproduces the normalized p-norm on the cube.
    """
    i0, i1, j0, j1, wx, wy = cube_overlap(f.grid, Q)
    mags = np.abs(f.values2d[j0:j1, i0:i1]).ravel()
    weights = np.outer(wy, wx).ravel()
    return _orlicz_average_weighted(mags, weights, Q.area, A)


# ----------------------------------------------------------------------------
# cube families and pair samples


def default_cube_family(grid: ComplexGrid, max_scales: int = 8, stride_factor: float = 0.5) -> list[Cube]:
    """Whole-cell test cubes: dyadic sides from 2h up to the grid extent,
    corners on cell boundaries, centers marching with half-cube stride.

    Only cubes fully inside the rectangle are produced, so oscillations are
    never polluted by the zero extension outside the domain.
    """
    cubes: list[Cube] = []
    width = min(grid.nx, grid.ny)
    cells = 2
    scales = 0
    while cells <= width and scales < max_scales:
        side = cells * grid.h
        stride = max(1, int(cells * stride_factor))
        for jy in range(0, grid.ny - cells + 1, stride):
            for jx in range(0, grid.nx - cells + 1, stride):
                cubes.append(Cube(grid.x0 + jx * grid.h, grid.y0 + jy * grid.h, side))
        cells *= 2
        scales += 1
    return cubes


def default_pair_sample(
    grid: ComplexGrid, max_exhaustive: int = 1600, n_random: int = 200_000, seed: int = 0
) -> np.ndarray:
    """Index pairs for Holder-quotient sampling: all pairs on coarse grids,
    a seeded random subset on fine ones."""
    n = grid.size
    if n <= max_exhaustive:
        ii, jj = np.triu_indices(n, k=1)
        return np.stack([ii, jj], axis=1)
    rng = np.random.default_rng(seed)
    ii = rng.integers(0, n, size=n_random)
    jj = rng.integers(0, n, size=n_random)
    keep = ii != jj
    return np.stack([ii[keep], jj[keep]], axis=1)


# ----------------------------------------------------------------------------
# seminorms (reproducible lower bounds over declared families)


def holder_seminorm(
    b: GridFunction, beta: float, sample_pairs: Optional[np.ndarray] = None
) -> float:
    """max over sampled pairs of |b(x) - b(y)| / |x - y|^beta; a lower bound
    on the Holder seminorm."""
    if not 0 < beta <= 1:
        raise InvalidExponentError(f"Holder exponent must lie in (0, 1], got {beta}")
    if sample_pairs is None:
        sample_pairs = default_pair_sample(b.grid)
    if sample_pairs.size == 0:
        return 0.0
    z = b.grid.centers()
    best = 0.0
    for lo in range(0, sample_pairs.shape[0], 1 << 20):
        chunk = sample_pairs[lo : lo + (1 << 20)]
        zi, zj = z[chunk[:, 0]], z[chunk[:, 1]]
        num = np.abs(b.values[chunk[:, 0]] - b.values[chunk[:, 1]])
        den = np.abs(zi - zj) ** beta
        best = max(best, float(np.max(num / den)))
    return best


def _oscillation_lp(b: GridFunction, Q: Cube, p: float) -> float:
    """integral over Q of |b - avg_Q b|^p (overlap-weighted)."""
    i0, i1, j0, j1, wx, wy = cube_overlap(b.grid, Q)
    block = b.values2d[j0:j1, i0:i1]
    w = np.outer(wy, wx)
    bq = (w * block).sum() / Q.area
    return float(np.sum(np.abs(block - bq) ** p * w))


def campanato_seminorm(
    b: GridFunction, p: float, lam: float, cube_family: Optional[Sequence[Cube]] = None
) -> float:
    """max over the family of (r^-lam * integral over Q of |b - b_Q|^p)^(1/p),
    with r the side length; a lower bound on the Campanato seminorm."""
    if p < 1:
        raise InvalidExponentError(f"Campanato seminorm needs p >= 1, got {p}")
    if cube_family is None:
        cube_family = default_cube_family(b.grid)
    best = 0.0
    for Q in cube_family:
        val = (Q.side**-lam * _oscillation_lp(b, Q, p)) ** (1.0 / p)
        best = max(best, val)
    return best


def bmo_seminorm(b: GridFunction, cube_family: Optional[Sequence[Cube]] = None) -> float:
    """Mean-oscillation seminorm: the Campanato value at p = 1, lambda = 2
    (kept as its own entry point for reporting)."""
    return campanato_seminorm(b, 1.0, 2.0, cube_family)


def orlicz_campanato_seminorm(
    b: GridFunction, A: YoungFunction, lam: float, cube_family: Optional[Sequence[Cube]] = None
) -> float:
    """max over the family of |Q|^(1 - lam/2) * ||b - b_Q||_{A,Q}."""
    if cube_family is None:
        cube_family = default_cube_family(b.grid)
    best = 0.0
    for Q in cube_family:
        i0, i1, j0, j1, wx, wy = cube_overlap(b.grid, Q)
        block = b.values2d[j0:j1, i0:i1]
        w = np.outer(wy, wx)
        bq = (w * block).sum() / Q.area
        avg = _orlicz_average_weighted(np.abs(block - bq).ravel(), w.ravel(), Q.area, A)
        best = max(best, Q.area ** (1.0 - lam / 2.0) * avg)
    return best
