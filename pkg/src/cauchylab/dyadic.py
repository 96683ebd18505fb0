"""Shifted dyadic grids on the plane and the cube machinery built on them:
the one-third-trick cover, stopping-time (Calderon-Zygmund style)
decompositions, good/bad splitting, sparse-family selection and
verification, and the geometric cube-sum identity.

Cubes are represented by (shift, level, integer offset) triples, never by
floating corners.  Corners involve thirds of powers of two, so geometry
decisions (containment, covers, areas) run on exact rationals and convert
to floats only when a cube is realized against a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DivergentSeriesError,
    EmptyIntersectionError,
    InvalidExponentError,
    RootTooSmallError,
)
from .grid import Cube, GridFunction, cube_integral, cube_overlap, normalized_lp_on_cube

__all__ = [
    "DyadicShift",
    "DyadicCube",
    "ALL_SHIFTS",
    "CZDecomposition",
    "CZPropertyReport",
    "SparseFamily",
    "GeometricCubeSumResult",
    "floor_log2",
    "ceil_log2",
    "containing_cube",
    "enumerate_shifted_cubes",
    "cover_cube",
    "cz_decompose",
    "suggest_root_level",
    "good_bad_split",
    "sparse_select",
    "verify_sparse",
    "geometric_cube_sum",
]

THIRD = Fraction(1, 3)


def floor_log2(x: float) -> int:
    """Largest integer k with 2^k <= x (exact for x an exact power of two)."""
    if x <= 0:
        raise ValueError(f"positive argument required, got {x}")
    m, e = math.frexp(x)
    return e - 1


def ceil_log2(x: float) -> int:
    """Smallest integer k with 2^k >= x."""
    if x <= 0:
        raise ValueError(f"positive argument required, got {x}")
    m, e = math.frexp(x)
    return e - 1 if m == 0.5 else e


@dataclass(frozen=True, order=True)
class DyadicShift:
    """One of the four grid shifts; component i of the shift vector is ei/3."""

    e1: int
    e2: int

    def __post_init__(self):
        if self.e1 not in (0, 1) or self.e2 not in (0, 1):
            raise ValueError("shift numerators must lie in {0, 1}")

    @property
    def t(self) -> tuple[Fraction, Fraction]:
        return (self.e1 * THIRD, self.e2 * THIRD)

    @property
    def label(self) -> str:
        parts = ["0" if e == 0 else "1/3" for e in (self.e1, self.e2)]
        return ",".join(parts)

    @classmethod
    def parse(cls, text: str) -> "DyadicShift":
        vals = []
        for part in text.split(","):
            part = part.strip()
            if part in ("0", "0.0"):
                vals.append(0)
            elif part in ("1/3", "0.3333", "third"):
                vals.append(1)
            else:
                raise ValueError(f"cannot parse shift component {part!r}; use 0 or 1/3")
        if len(vals) != 2:
            raise ValueError(f"shift needs two components, got {text!r}")
        return cls(vals[0], vals[1])


ALL_SHIFTS: tuple[DyadicShift, ...] = (
    DyadicShift(0, 0),
    DyadicShift(1, 0),
    DyadicShift(0, 1),
    DyadicShift(1, 1),
)


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Cube of side 2^k with corner 2^k * (m + (-1)^k * t) in the shifted grid."""

    shift: DyadicShift
    k: int
    m: tuple[int, int]

    @property
    def sign(self) -> int:
        """(-1)^k; the alternation keeps parent/child relations integral."""
        return -1 if self.k % 2 else 1

    @property
    def side(self) -> float:
        return 2.0**self.k

    @property
    def area(self) -> float:
        return 4.0**self.k

    @property
    def area_exact(self) -> Fraction:
        return Fraction(4) ** self.k

    def corner_fractions(self) -> tuple[Fraction, Fraction]:
        two_k = Fraction(2) ** self.k
        s = self.sign
        return (
            two_k * (3 * self.m[0] + s * self.shift.e1) / 3,
            two_k * (3 * self.m[1] + s * self.shift.e2) / 3,
        )

    def realize(self) -> Cube:
        cx, cy = self.corner_fractions()
        return Cube(float(cx), float(cy), self.side)

    def parent(self) -> "DyadicCube":
        s_par = -self.sign  # (-1)^(k+1)
        mp = tuple((mi - s_par * ei) >> 1 for mi, ei in zip(self.m, (self.shift.e1, self.shift.e2)))
        return DyadicCube(self.shift, self.k + 1, mp)

    def children(self) -> tuple["DyadicCube", ...]:
        s = self.sign
        e = (self.shift.e1, self.shift.e2)
        kids = []
        for j2 in (0, 1):
            for j1 in (0, 1):
                mc = (2 * self.m[0] + j1 + s * e[0], 2 * self.m[1] + j2 + s * e[1])
                kids.append(DyadicCube(self.shift, self.k - 1, mc))
        return tuple(kids)

    def contains_cube(self, other: Cube) -> bool:
        """Exact containment of an axis-aligned square (half-open convention)."""
        cx, cy = self.corner_fractions()
        two_k = Fraction(2) ** self.k
        ox, oy, os = Fraction(other.x), Fraction(other.y), Fraction(other.side)
        return cx <= ox and ox + os <= cx + two_k and cy <= oy and oy + os <= cy + two_k

    def key(self) -> tuple[int, tuple[int, int]]:
        return (self.k, self.m)


def containing_cube(shift: DyadicShift, k: int, x, y) -> DyadicCube:
    """The level-k cube of the shifted grid containing the point (x, y)."""
    two_k = Fraction(2) ** k
    s = -1 if k % 2 else 1
    t1, t2 = shift.t
    m1 = math.floor(Fraction(x) / two_k - s * t1)
    m2 = math.floor(Fraction(y) / two_k - s * t2)
    return DyadicCube(shift, k, (m1, m2))


def enumerate_shifted_cubes(
    shift: DyadicShift, k_min: int, k_max: int, box: Cube
) -> list[DyadicCube]:
    """All cubes of the shifted grid with level in [k_min, k_max] meeting the box.

    At each fixed level the returned cubes tile the box without gaps or
    overlaps (they are a contiguous rectangle of offsets).
    """
    if k_min > k_max:
        raise ValueError(f"invalid level range [{k_min}, {k_max}]")
    bx0, by0 = Fraction(box.x), Fraction(box.y)
    bx1, by1 = bx0 + Fraction(box.side), by0 + Fraction(box.side)
    out: list[DyadicCube] = []
    for k in range(k_min, k_max + 1):
        two_k = Fraction(2) ** k
        s = -1 if k % 2 else 1
        t1, t2 = shift.t
        ranges = []
        for b0, b1, t in ((bx0, bx1, t1), (by0, by1, t2)):
            lo = b0 / two_k - s * t - 1  # m must satisfy lo < m < hi
            hi = b1 / two_k - s * t
            ranges.append(range(math.floor(lo) + 1, math.ceil(hi)))
        for m2 in ranges[1]:
            for m1 in ranges[0]:
                out.append(DyadicCube(shift, k, (m1, m2)))
    return out


def cover_cube(q: Cube) -> tuple[DyadicShift, DyadicCube]:
    """A shifted dyadic cube containing q with side at most 6 times q's side.

    Searches the four shifts at the candidate levels 2^k in [side, 8*side);
    a cover with ratio < 6 is guaranteed to exist at the level where 2^k
    first reaches 3*side, because an interval shorter than a third of the
    mesh cannot meet the partition points of both 1-d shifted grids.
    Returns the smallest admissible cover found, so a cube that already
    belongs to a shifted grid is covered by itself.
    """
    k_lo = ceil_log2(q.side)
    six_sides = 6 * Fraction(q.side)
    for k in range(k_lo, k_lo + 4):
        if Fraction(2) ** k > six_sides:
            break
        for shift in ALL_SHIFTS:
            cand = containing_cube(shift, k, q.x, q.y)
            if cand.contains_cube(q):
                return shift, cand
    raise AssertionError(f"one-third cover not found for {q}; this cannot happen")


# ----------------------------------------------------------------------------
# stopping-time decomposition


def _cube_integral_fsum(f: GridFunction, cube: Cube) -> float:
    """Overlap-weighted integral with an exactly rounded final sum.

    Used by the decomposition paths so that repeated verification of the
    selection inequalities sees identical floats.
    """
    try:
        i0, i1, j0, j1, wx, wy = cube_overlap(f.grid, cube)
    except EmptyIntersectionError:
        return 0.0
    prod = f.values2d[j0:j1, i0:i1].real * np.outer(wy, wx)
    return math.fsum(prod.ravel().tolist())


@dataclass(frozen=True)
class CZPropertyReport:
    cells_above_height_covered: bool  # property (1), cell-wise via centers
    union_area: float
    mass_over_height: float  # ||f||_1 / height
    union_bound_holds: bool  # property (2)
    averages_in_band: bool  # property (3): height < avg <= 4 * height
    min_average: float
    max_average: float

    @property
    def all_hold(self) -> bool:
        return self.cells_above_height_covered and self.union_bound_holds and self.averages_in_band


@dataclass(frozen=True)
class CZDecomposition:
    """Maximal disjoint cubes of one shifted grid where the average of f
    exceeds the height."""

    height: float
    shift: DyadicShift
    root_level: int
    cubes: tuple[DyadicCube, ...]
    averages: tuple[float, ...]
    f: GridFunction = field(repr=False)

    def union_area(self) -> float:
        return float(sum(c.area for c in self.cubes))

    def check_properties(self) -> CZPropertyReport:
        lam = self.height
        g = self.f.grid
        covered = np.zeros(g.size, dtype=bool)
        xc, yc = g.x_centers(), g.y_centers()
        for c in self.cubes:
            r = c.realize()
            i0 = int(np.searchsorted(xc, r.x, side="left"))
            i1 = int(np.searchsorted(xc, r.x + r.side, side="left"))
            j0 = int(np.searchsorted(yc, r.y, side="left"))
            j1 = int(np.searchsorted(yc, r.y + r.side, side="left"))
            block = covered.reshape(g.ny, g.nx)
            block[j0:j1, i0:i1] = True
        above = self.f.values.real > lam
        prop1 = bool(np.all(covered[above]))
        mass = math.fsum((self.f.values.real * g.cell_area).tolist())
        union = self.union_area()
        prop2 = union <= mass / lam
        if self.cubes:
            mn, mx = min(self.averages), max(self.averages)
            prop3 = all(lam < a <= 4.0 * lam for a in self.averages)
        else:
            mn = mx = 0.0
            prop3 = True
        return CZPropertyReport(
            cells_above_height_covered=prop1,
            union_area=union,
            mass_over_height=mass / lam,
            union_bound_holds=prop2,
            averages_in_band=prop3,
            min_average=mn,
            max_average=mx,
        )

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "shift": self.shift.label,
            "root_level": self.root_level,
            "cubes": [
                {"level": c.k, "offset": list(c.m), "average": a}
                for c, a in zip(self.cubes, self.averages)
            ],
        }


def suggest_root_level(f: GridFunction, height: float) -> int:
    """A level at which every root average is guaranteed to be at most the height."""
    mass = float(np.sum(f.values.real)) * f.grid.cell_area
    g = f.grid
    lvl = ceil_log2(max(g.nx, g.ny) * g.h)
    if mass > 0:
        lvl = max(lvl, math.ceil(math.log2(mass / height) / 2))
    return lvl


def cz_decompose(
    f: GridFunction, height: float, shift: DyadicShift, root_level: int
) -> CZDecomposition:
    """Stopping-time selection of maximal shifted-dyadic cubes with average above the height.

    Descends from the root cubes covering the grid rectangle; a cube is
    selected as soon as its average exceeds the height, otherwise its
    children are visited.  Descent stops one level below the cell size,
    which is deep enough that every cell whose value exceeds the height has
    its center inside some selected cube.
    """
    if height <= 0:
        raise ValueError(f"height must be positive, got {height}")
    if not f.is_nonnegative():
        raise ValueError("decomposition requires a nonnegative real function")
    g = f.grid
    box = g.bounding_cube()
    floor_level = floor_log2(g.h) - 1
    if root_level <= floor_level:
        raise ValueError(f"root level {root_level} is below the cell scale {floor_level + 1}")

    roots = enumerate_shifted_cubes(shift, root_level, root_level, box)
    stack: list[DyadicCube] = []
    for r in roots:
        integ = _cube_integral_fsum(f, r.realize())
        if integ == 0.0:
            continue
        avg = integ / r.area
        if avg > height:
            raise RootTooSmallError(
                f"root cube at level {root_level} has average {avg} > height {height}; "
                f"use root_level >= {suggest_root_level(f, height)}",
                needed_level=suggest_root_level(f, height),
            )
        stack.append(r)

    selected: list[DyadicCube] = []
    averages: list[float] = []
    while stack:
        cube = stack.pop()
        for child in cube.children():
            integ = _cube_integral_fsum(f, child.realize())
            if integ == 0.0:
                continue
            avg = integ / child.area
            if avg > height:
                selected.append(child)
                averages.append(avg)
            elif child.k > floor_level:
                stack.append(child)

    order = sorted(range(len(selected)), key=lambda i: selected[i].key())
    return CZDecomposition(
        height=height,
        shift=shift,
        root_level=root_level,
        cubes=tuple(selected[i] for i in order),
        averages=tuple(averages[i] for i in order),
        f=f,
    )


def good_bad_split(
    u: GridFunction, a: float, k: int, decomposition: CZDecomposition
) -> tuple[GridFunction, GridFunction]:
    """Split u into the oscillating part carried by the decomposition cubes
    and the bounded remainder.

    The bad part subtracts, on the cells whose centers lie in a selected
    cube, the overlap-weighted average of u over those member cells; this
    makes the cube averages of the bad part vanish in grid arithmetic.  The
    good part is u minus the bad part.
    """
    if not a > 4:
        raise ValueError(f"the height base must satisfy a > 4, got {a}")
    g = u.grid
    xc, yc = g.x_centers(), g.y_centers()
    bad = np.zeros(g.size, dtype=np.complex128)
    v2 = u.values2d
    bad2 = bad.reshape(g.ny, g.nx)
    for cube in decomposition.cubes:
        r = cube.realize()
        i0 = int(np.searchsorted(xc, r.x, side="left"))
        i1 = int(np.searchsorted(xc, r.x + r.side, side="left"))
        j0 = int(np.searchsorted(yc, r.y, side="left"))
        j1 = int(np.searchsorted(yc, r.y + r.side, side="left"))
        if i0 >= i1 or j0 >= j1:
            continue  # cube smaller than a cell: nothing representable on the grid
        oi0, oi1, oj0, oj1, wx, wy = cube_overlap(g, r)
        wxm = wx[i0 - oi0 : i1 - oi0]
        wym = wy[j0 - oj0 : j1 - oj0]
        w = np.outer(wym, wxm)
        block = v2[j0:j1, i0:i1]
        c = (w * block).sum() / w.sum()
        bad2[j0:j1, i0:i1] = block - c
    b_k = GridFunction(g, bad)
    g_k = GridFunction(g, u.values - bad)
    return b_k, g_k


# ----------------------------------------------------------------------------
# sparse families


@dataclass(frozen=True)
class SparseFamily:
    """Cubes of one shifted grid together with their majority sets.

    The majority set of a cube is the cube minus its selected proper
    subcubes; ``majority_subtractions`` lists, for each cube, the maximal
    selected cubes strictly inside it, which represents that set exactly.
    """

    cubes: tuple[DyadicCube, ...]
    alpha: float = 0.5
    majority_subtractions: tuple[tuple[DyadicCube, ...], ...] = ()

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.majority_subtractions:
            object.__setattr__(self, "majority_subtractions", _majority_subtractions(self.cubes))
        shifts = {c.shift for c in self.cubes}
        if len(shifts) > 1:
            raise ValueError("sparse family must come from a single shifted grid")

    def majority_areas(self) -> list[Fraction]:
        return [
            c.area_exact - sum((d.area_exact for d in subs), Fraction(0))
            for c, subs in zip(self.cubes, self.majority_subtractions)
        ]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "shift": self.cubes[0].shift.label if self.cubes else None,
            "cubes": [{"level": c.k, "offset": list(c.m)} for c in self.cubes],
            "majority_areas": [float(a) for a in self.majority_areas()],
        }


def _is_proper_ancestor(anc: DyadicCube, desc: DyadicCube) -> bool:
    if anc.k <= desc.k:
        return False
    cur = desc
    while cur.k < anc.k:
        cur = cur.parent()
    return cur.key() == anc.key()


def _majority_subtractions(cubes: Sequence[DyadicCube]) -> tuple[tuple[DyadicCube, ...], ...]:
    """For each cube, its maximal proper descendants within the family."""
    keys = {c.key(): i for i, c in enumerate(cubes)}
    levels = sorted({c.k for c in cubes})
    out: list[list[DyadicCube]] = [[] for _ in cubes]
    if not levels:
        return ()
    top = max(levels)
    for c in cubes:
        cur = c
        while cur.k < top:
            cur = cur.parent()
            idx = keys.get(cur.key())
            if idx is not None and cubes[idx].key() != c.key():
                out[idx].append(c)
                break
    return tuple(tuple(sorted(lst, key=lambda d: d.key())) for lst in out)


def _pool_norm(g: GridFunction, cube: DyadicCube, p: float) -> float:
    try:
        return normalized_lp_on_cube(g, cube.realize(), p)
    except EmptyIntersectionError:
        return 0.0


def sparse_select(g: GridFunction, p: float, cube_pool: Sequence[DyadicCube]) -> SparseFamily:
    """Select the union over all thresholds c^k of the maximal pool cubes whose
    normalized p-norm exceeds the threshold, with c = 2^(3/p).

    A cube enters the family exactly when some integer power of c separates
    it from the norms of all its pool ancestors; the majority sets of the
    result keep at least half of each cube for this choice of c.
    """
    if p <= 1:
        raise InvalidExponentError(f"sparse selection needs p > 1, got {p}")
    shifts = {c.shift for c in cube_pool}
    if len(shifts) > 1:
        raise ValueError("cube pool must come from a single shifted grid")
    pool = sorted({c.key(): c for c in cube_pool}.values(), key=lambda c: (-c.k, c.m))
    if not pool:
        return SparseFamily(cubes=())
    c_const = 2.0 ** (3.0 / p)
    top_level = pool[0].k
    by_key = {c.key(): c for c in pool}
    norms: dict[tuple, float] = {c.key(): _pool_norm(g, c, p) for c in pool}
    max_anc: dict[tuple, float] = {}
    for cube in pool:  # top-down: parents are resolved before children
        cur = cube
        anc = 0.0
        while cur.k < top_level:
            cur = cur.parent()
            k = cur.key()
            if k in by_key:
                anc = max(norms[k], max_anc[k])
                break
        max_anc[cube.key()] = anc

    selected = []
    log_c = math.log(c_const)
    for cube in pool:
        nq = norms[cube.key()]
        if nq <= 0.0:
            continue
        anc = max_anc[cube.key()]
        if anc == 0.0:
            selected.append(cube)
            continue
        # smallest integer k0 with c^k0 >= anc, robust against log rounding
        k0 = math.ceil(math.log(anc) / log_c - 1e-12)
        while c_const**k0 < anc:
            k0 += 1
        while c_const ** (k0 - 1) >= anc:
            k0 -= 1
        if c_const**k0 < nq:
            selected.append(cube)
    return SparseFamily(cubes=tuple(sorted(selected, key=lambda c: c.key())))


def verify_sparse(family: SparseFamily) -> tuple[bool, float]:
    """Exact-area check of the sparse property.

    Majority areas are recomputed with rational dyadic arithmetic; the
    family holds if its cubes are pairwise distinct (majority sets are then
    automatically disjoint within one shifted grid) and the smallest
    majority fraction reaches the claimed alpha.
    """
    if not family.cubes:
        return True, 1.0
    keys = [c.key() for c in family.cubes]
    no_duplicates = len(set(keys)) == len(keys)
    subs = _majority_subtractions(family.cubes)
    ratios = []
    for c, sub in zip(family.cubes, subs):
        e_area = c.area_exact - sum((d.area_exact for d in sub), Fraction(0))
        ratios.append(e_area / c.area_exact)
    alpha_measured = min(ratios)
    holds = no_duplicates and alpha_measured >= Fraction(family.alpha)
    return holds, float(alpha_measured)


# ----------------------------------------------------------------------------
# geometric cube sum


@dataclass(frozen=True)
class GeometricCubeSumResult:
    partial_sum: complex
    closed_form: complex
    c_beta: float
    beta: float
    max_depth: int

    def tail_bound(self) -> float:
        """Bound for |partial - closed| when the averaged function is constant."""
        r = 2.0 ** (-(1.0 + self.beta))
        return abs(self.closed_form) * r ** (self.max_depth + 1) / (1.0 - r)


def geometric_cube_sum(
    P: DyadicCube, beta: float, f: GridFunction, max_depth: int
) -> GeometricCubeSumResult:
    """Sum of |Q|^(3/2 + beta/2) * avg_Q(f) over the descendants of P down to
    max_depth, against its closed form.

    The 4^j descendants at depth j tile P, so their integrals add up to the
    integral over P and the depth-j layer collapses to a single geometric
    term; the full series sums to C_beta * |P|^(3/2 + beta/2) * avg_P(f)
    with C_beta = 1 / (1 - 2^-(1+beta)).
    """
    if beta <= -1:
        raise DivergentSeriesError(f"the cube sum needs beta > -1, got {beta}")
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    r = 2.0 ** (-(1.0 + beta))
    c_beta = 1.0 / (1.0 - r)
    mass = cube_integral(f, P.realize())
    layer = P.area ** ((1.0 + beta) / 2.0)
    partial = 0j
    weight = 1.0
    for _ in range(max_depth + 1):
        partial += layer * weight * mass
        weight *= r
    closed = c_beta * layer * mass
    return GeometricCubeSumResult(
        partial_sum=complex(partial),
        closed_form=complex(closed),
        c_beta=c_beta,
        beta=beta,
        max_depth=max_depth,
    )
