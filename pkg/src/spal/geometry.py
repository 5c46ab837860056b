"""Polyhedral feasible sets: projections, violations, halfspace reductions.

Every set is a :class:`PolyhedralSet` in one of five variants — free space,
box, nonnegative orthant, scaled simplex, or an explicit halfspace system
``Hx <= h``.  The first four project in closed form (clipping or
sort-and-threshold); the halfspace variant runs Dykstra's alternating
projections.  All variants can report themselves as a halfspace system,
which is what the audit tooling consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import as_matrix, as_vector, check_finite

_VARIANTS = ("free", "box", "nonneg", "simplex", "halfspaces")

_KIND_CODES = {
    "free": _kernels.SET_FREE,
    "box": _kernels.SET_BOX,
    "nonneg": _kernels.SET_NONNEG,
    "simplex": _kernels.SET_SIMPLEX,
}

_EMPTY = np.zeros(0)


class ProjectionError(RuntimeError):
    """Dykstra failed to converge (iteration cap or an infeasible system)."""

    def __init__(self, msg: str, residual: float, iterations: int):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PolyhedralSet:
    """A closed convex polyhedron in one of the supported variants.

    Construct through the classmethods (``free``, ``box``, ``nonneg``,
    ``simplex``, ``halfspaces``) rather than directly; they normalize and
    validate the data.

    Attributes
    ----------
    kind : str
        One of ``free | box | nonneg | simplex | halfspaces``.
    dim : int
        Ambient dimension.
    lo, hi : ndarray
        Bounds for the box variant (entries may be ``-inf``/``+inf``).
    radius : float
        Simplex scale: the set is ``{x >= 0, sum(x) = radius}``.
    H, h : ndarray
        Halfspace system for the ``halfspaces`` variant.
    bounded : bool or None
        For halfspaces only: caller's assertion that the set is bounded.
        ``None`` means unknown.  Other variants derive boundedness.
    """

    kind: str
    dim: int
    lo: np.ndarray = field(default_factory=lambda: _EMPTY)
    hi: np.ndarray = field(default_factory=lambda: _EMPTY)
    radius: float = 1.0
    H: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h: np.ndarray = field(default_factory=lambda: _EMPTY)
    bounded: bool | None = None

    # -- constructors ------------------------------------------------------

    @classmethod
    def free(cls, dim: int) -> "PolyhedralSet":
        """All of R^dim."""
        _check_dim(dim)
        return cls(kind="free", dim=dim)

    @classmethod
    def box(cls, lo, hi) -> "PolyhedralSet":
        """Axis-aligned box ``{lo <= x <= hi}``; infinite bounds allowed."""
        lo = as_vector(lo, "lo")
        hi = as_vector(hi, "hi")
        if lo.shape != hi.shape:
            raise ValueError(
                f"box bounds disagree on dimension: {lo.shape[0]} vs {hi.shape[0]}"
            )
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not contain NaN")
        if np.any(lo > hi):
            raise ValueError("box is empty: some lo[i] > hi[i]")
        return cls(kind="box", dim=lo.shape[0], lo=lo, hi=hi)

    @classmethod
    def nonneg(cls, dim: int) -> "PolyhedralSet":
        """Nonnegative orthant ``{x >= 0}``."""
        _check_dim(dim)
        return cls(kind="nonneg", dim=dim)

    @classmethod
    def simplex(cls, dim: int, radius: float = 1.0) -> "PolyhedralSet":
        """Scaled probability simplex ``{x >= 0, sum(x) = radius}``."""
        _check_dim(dim)
        radius = float(radius)
        if not np.isfinite(radius) or radius <= 0:
            raise ValueError(f"simplex radius must be finite and positive, got {radius}")
        return cls(kind="simplex", dim=dim, radius=radius)

    @classmethod
    def halfspaces(cls, H, h, bounded: bool | None = None) -> "PolyhedralSet":
        """Intersection of halfspaces ``Hx <= h``.

        ``bounded=True`` is the caller's assertion that the polyhedron is
        bounded (needed by solver variants whose dual safeguards require a
        compact feasible set).
        """
        H = as_matrix(H, "H")
        h = as_vector(h, "h")
        check_finite(H, "H")
        check_finite(h, "h")
        if H.shape[0] != h.shape[0]:
            raise ValueError(
                f"halfspace system shapes disagree: H has {H.shape[0]} rows, h has {h.shape[0]}"
            )
        if H.shape[0] == 0:
            raise ValueError("halfspace variant needs at least one row; use free() instead")
        return cls(kind="halfspaces", dim=H.shape[1], H=H, h=h, bounded=bounded)

    # -- geometry ----------------------------------------------------------

    def is_bounded(self) -> bool | None:
        """True/False when derivable from the variant, else the user flag."""
        if self.kind == "free":
            return self.dim == 0
        if self.kind == "box":
            return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))
        if self.kind == "nonneg":
            return self.dim == 0
        if self.kind == "simplex":
            return True
        return self.bounded

    def as_halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """Reduce the set to an explicit system ``(H, h)`` with ``Hx <= h``.

        Infinite box bounds contribute no rows; the simplex equality is
        written as the usual pair of opposing inequalities.
        """
        n = self.dim
        if self.kind == "free":
            return np.zeros((0, n)), np.zeros(0)
        if self.kind == "box":
            rows = []
            rhs = []
            eye = np.eye(n)
            for i in range(n):
                if np.isfinite(self.hi[i]):
                    rows.append(eye[i])
                    rhs.append(self.hi[i])
                if np.isfinite(self.lo[i]):
                    rows.append(-eye[i])
                    rhs.append(-self.lo[i])
            if not rows:
                return np.zeros((0, n)), np.zeros(0)
            return np.array(rows), np.array(rhs)
        if self.kind == "nonneg":
            return -np.eye(n), np.zeros(n)
        if self.kind == "simplex":
            ones = np.ones((1, n))
            H = np.vstack([-np.eye(n), ones, -ones])
            h = np.concatenate([np.zeros(n), [self.radius, -self.radius]])
            return H, h
        return self.H.copy(), self.h.copy()

    def encode(self) -> tuple[int, np.ndarray, np.ndarray, float]:
        """Kernel encoding ``(kind_code, lo, hi, radius)``.

        Raises for the halfspace variant, which has no closed-form kernel.
        """
        if self.kind == "halfspaces":
            raise ValueError("halfspace sets have no closed-form kernel encoding")
        code = _KIND_CODES[self.kind]
        if self.kind == "box":
            return code, self.lo, self.hi, 0.0
        if self.kind == "simplex":
            return code, _EMPTY, _EMPTY, self.radius
        return code, _EMPTY, _EMPTY, 0.0

    def contains(self, x, tol: float = 1e-9) -> bool:
        return violation(self, x) <= tol

    def to_dict(self) -> dict:
        """JSON-friendly description (inverse of :meth:`from_dict`)."""
        d: dict = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            # inf round-trips through JSON as a string sentinel
            d["lo"] = [x if np.isfinite(x) else str(x) for x in self.lo]
            d["hi"] = [x if np.isfinite(x) else str(x) for x in self.hi]
        elif self.kind == "simplex":
            d["radius"] = self.radius
        elif self.kind == "halfspaces":
            d["H"] = self.H.tolist()
            d["h"] = self.h.tolist()
            d["bounded"] = self.bounded
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolyhedralSet":
        kind = d["kind"]
        if kind == "free":
            return cls.free(d["dim"])
        if kind == "box":
            lo = [float(x) for x in d["lo"]]
            hi = [float(x) for x in d["hi"]]
            return cls.box(lo, hi)
        if kind == "nonneg":
            return cls.nonneg(d["dim"])
        if kind == "simplex":
            return cls.simplex(d["dim"], d.get("radius", 1.0))
        if kind == "halfspaces":
            return cls.halfspaces(d["H"], d["h"], bounded=d.get("bounded"))
        raise ValueError(f"unknown set kind {kind!r}")

    def sample_point(self, rng, scale: float = 1.0) -> np.ndarray:
        """Draw a point of the set (distribution is variant-specific).

        Used by audits that need feasible probe points; no uniformity claim.
        Infinite box directions are truncated at ``10 * scale``.
        """
        n = self.dim
        if self.kind == "free":
            return scale * rng.standard_normal(n)
        if self.kind == "box":
            cap = 10.0 * scale
            lo = np.where(np.isfinite(self.lo), self.lo, -cap)
            hi = np.where(np.isfinite(self.hi), self.hi, cap)
            return lo + (hi - lo) * rng.random(n)
        if self.kind == "nonneg":
            return scale * np.abs(rng.standard_normal(n))
        if self.kind == "simplex":
            g = -np.log(rng.random(n))  # unit exponentials -> Dirichlet(1)
            return self.radius * g / g.sum()
        return project(self, scale * rng.standard_normal(n))


def _check_dim(dim) -> None:
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dimension must be a positive integer, got {dim!r}")


def project(poly: PolyhedralSet, x, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Euclidean projection of ``x`` onto the set.

    Closed form for free/box/nonneg/simplex.  The halfspace variant runs
    Dykstra's alternating projections with the given tolerance and a cap of
    ``max(10 * dim * rows, 500)`` full sweeps (override with ``max_iter``);
    the floor keeps small systems with nearly parallel rows, where the
    linear rate is close to one, from tripping the cap at tight tolerances.
    Non-convergence raises :class:`ProjectionError`, which is also how
    infeasible systems surface (their residual stalls above tolerance).
    """
    x = as_vector(x, "x")
    if x.shape[0] != poly.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, set has {poly.dim}")
    check_finite(x, "x")
    if poly.kind == "halfspaces":
        cap = max_iter if max_iter is not None else max(10 * poly.dim * poly.H.shape[0], 500)
        out, resid, used, ok = _kernels.dykstra(poly.H, poly.h, x, tol, cap)
        if not ok:
            raise ProjectionError(
                f"projection onto halfspace system did not converge "
                f"(residual {resid:.3e} after {used} sweeps); "
                f"the system may be infeasible",
                residual=float(resid),
                iterations=int(used),
            )
        return out
    code, lo, hi, radius = poly.encode()
    return np.asarray(_kernels.project_encoded(x, code, lo, hi, radius))


def violation(poly: PolyhedralSet, x) -> float:
    """Max violation ``max(0, max_i (Hx - h)_i)`` of the halfspace reduction.

    Zero exactly on the set.  For the box variant infinite bounds contribute
    nothing; for the simplex both orientations of the sum constraint count.
    """
    x = as_vector(x, "x")
    if x.shape[0] != poly.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, set has {poly.dim}")
    if poly.kind == "halfspaces":
        return float(max(0.0, np.max(poly.H @ x - poly.h)))
    code, lo, hi, radius = poly.encode()
    return float(_kernels.violation_encoded(x, code, lo, hi, radius))


def _box_like(poly: PolyhedralSet) -> tuple[np.ndarray, np.ndarray] | None:
    # (lo, hi) when the variant is an axis-aligned box in disguise.
    if poly.kind == "free":
        return np.full(poly.dim, -np.inf), np.full(poly.dim, np.inf)
    if poly.kind == "box":
        return poly.lo, poly.hi
    if poly.kind == "nonneg":
        return np.zeros(poly.dim), np.full(poly.dim, np.inf)
    return None


def product(left: PolyhedralSet, right: PolyhedralSet) -> PolyhedralSet:
    """Cartesian product, used when a problem gains slack coordinates.

    Two box-like factors stay a box; anything else falls back to a stacked
    halfspace system (boundedness flag propagates conjunctively).
    """
    lb = _box_like(left)
    rb = _box_like(right)
    if lb is not None and rb is not None:
        return PolyhedralSet.box(
            np.concatenate([lb[0], rb[0]]), np.concatenate([lb[1], rb[1]])
        )
    Hl, hl = left.as_halfspaces()
    Hr, hr = right.as_halfspaces()
    n, m = left.dim, right.dim
    H = np.zeros((Hl.shape[0] + Hr.shape[0], n + m))
    H[: Hl.shape[0], :n] = Hl
    H[Hl.shape[0] :, n:] = Hr
    h = np.concatenate([hl, hr])
    lbnd = left.is_bounded()
    rbnd = right.is_bounded()
    bounded = (lbnd and rbnd) if (lbnd is not None and rbnd is not None) else None
    return PolyhedralSet.halfspaces(H, h, bounded=bounded)
