"""Decision sets accessed through linear optimization oracles.

Each set exposes ``lmo(v) = argmin_{x in set} <v, x>``, its exact l2 diameter,
an optional inner radius ``r`` with ``r * B_2^n`` contained in the set, and a
closed-form membership test used by the tests. Ties in the oracle are broken
toward the lowest coordinate index so seeded runs are reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from privbandit.smoothing import LossOracle

MEMBER_TOL = 1e-9


def _as_point(v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected a vector of dimension {n}, got shape {v.shape}")
    return v


class DecisionSet:
    """Base class; subclasses implement ``_lmo``, ``diameter`` and ``contains``."""

    kind = "abstract"
    inner_radius: float | None = None

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = int(dimension)

    def lmo(self, v) -> np.ndarray:
        return self._lmo(_as_point(v, self.dimension))

    def _lmo(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def contains(self, x, tol: float = MEMBER_TOL) -> bool:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


class Simplex(DecisionSet):
    """Probability simplex {x >= 0, sum x = 1}."""

    kind = "simplex"

    def _lmo(self, v):
        x = np.zeros(self.dimension)
        x[int(np.argmin(v))] = 1.0
        return x

    @property
    def diameter(self):
        return math.sqrt(2.0) if self.dimension > 1 else 0.0

    def contains(self, x, tol=MEMBER_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol * self.dimension)

    def to_config(self):
        return {"kind": self.kind, "n": self.dimension}


class Hypercube(DecisionSet):
    """Axis-aligned cube [low, low + side]^n."""

    kind = "hypercube"

    def __init__(self, dimension: int, side: float = 1.0, low: float = 0.0):
        super().__init__(dimension)
        if not side > 0:
            raise ValueError("hypercube side must be positive")
        self.side = float(side)
        self.low = float(low)
        high = self.low + self.side
        # Largest origin-centred ball inside the cube, if the origin is interior.
        r = min(-self.low, high)
        self.inner_radius = r if r > 0 else None

    def _lmo(self, v):
        # v_i == 0 ties resolve to the lower face.
        return np.where(v < 0, self.low + self.side, self.low)

    @property
    def diameter(self):
        return self.side * math.sqrt(self.dimension)

    def contains(self, x, tol=MEMBER_TOL):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.low - tol) and np.all(x <= self.low + self.side + tol))

    def to_config(self):
        return {"kind": self.kind, "n": self.dimension, "side": self.side, "low": self.low}


class L1Ball(DecisionSet):
    """{x : ||x||_1 <= radius}."""

    kind = "l1_ball"

    def __init__(self, dimension: int, radius: float = 1.0):
        super().__init__(dimension)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.inner_radius = self.radius / math.sqrt(self.dimension)

    def _lmo(self, v):
        i = int(np.argmax(np.abs(v)))
        x = np.zeros(self.dimension)
        x[i] = -self.radius if v[i] > 0 else self.radius
        return x

    @property
    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x, tol=MEMBER_TOL):
        return bool(np.abs(np.asarray(x, dtype=float)).sum() <= self.radius * (1 + tol) + tol)

    def to_config(self):
        return {"kind": self.kind, "n": self.dimension, "radius": self.radius}


class L2Ball(DecisionSet):
    """{x : ||x||_2 <= radius}."""

    kind = "l2_ball"

    def __init__(self, dimension: int, radius: float = 1.0):
        super().__init__(dimension)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.inner_radius = self.radius

    def _lmo(self, v):
        norm = np.linalg.norm(v)
        if norm == 0.0:
            x = np.zeros(self.dimension)
            x[0] = self.radius
            return x
        return -self.radius * v / norm

    @property
    def diameter(self):
        return 2.0 * self.radius

    def contains(self, x, tol=MEMBER_TOL):
        return bool(np.linalg.norm(np.asarray(x, dtype=float)) <= self.radius * (1 + tol) + tol)

    def project(self, y) -> np.ndarray:
        """Exact Euclidean projection; only the ball gets one in closed form."""
        y = _as_point(y, self.dimension)
        norm = np.linalg.norm(y)
        return y if norm <= self.radius else self.radius * y / norm

    def to_config(self):
        return {"kind": self.kind, "n": self.dimension, "radius": self.radius}


class PartitionMatroidBase(DecisionSet):
    """Base polytope of a partition matroid.

    Coordinates are split into consecutive parts of the given sizes; a base picks
    exactly ``ranks[j]`` coordinates of part ``j``. The oracle is the matroid
    greedy: in each part, take the ``ranks[j]`` smallest weights (stable order).
    """

    kind = "partition_matroid"

    def __init__(self, part_sizes, ranks):
        part_sizes = [int(s) for s in part_sizes]
        ranks = [int(k) for k in ranks]
        if len(part_sizes) != len(ranks) or not part_sizes:
            raise ValueError("need one rank per part")
        for s, k in zip(part_sizes, ranks):
            if s < 1 or not 0 <= k <= s:
                raise ValueError(f"invalid part (size={s}, rank={k})")
        super().__init__(sum(part_sizes))
        self.part_sizes = part_sizes
        self.ranks = ranks
        self._bounds = np.cumsum([0] + part_sizes)

    def _lmo(self, v):
        x = np.zeros(self.dimension)
        for j, k in enumerate(self.ranks):
            lo, hi = self._bounds[j], self._bounds[j + 1]
            chosen = np.argsort(v[lo:hi], kind="stable")[:k]
            x[lo + chosen] = 1.0
        return x

    @property
    def diameter(self):
        # Two bases differ in at most min(k, s - k) swaps per part, each costing 2.
        return math.sqrt(sum(2 * min(k, s - k) for s, k in zip(self.part_sizes, self.ranks)))

    def contains(self, x, tol=MEMBER_TOL):
        x = np.asarray(x, dtype=float)
        if np.any(x < -tol) or np.any(x > 1 + tol):
            return False
        for j, k in enumerate(self.ranks):
            lo, hi = self._bounds[j], self._bounds[j + 1]
            if abs(x[lo:hi].sum() - k) > tol * (hi - lo):
                return False
        return True

    def to_config(self):
        return {"kind": self.kind, "parts": list(self.part_sizes), "ranks": list(self.ranks)}


def lmo(domain: DecisionSet, v) -> np.ndarray:
    """Exact minimizer of <v, x> over ``domain``."""
    return domain.lmo(v)


def diameter(domain: DecisionSet) -> float:
    return domain.diameter


def domain_from_config(cfg: dict) -> DecisionSet:
    """Build a decision set from its JSON description (see README)."""
    kind = cfg.get("kind")
    try:
        if kind == "simplex":
            return Simplex(int(cfg["n"]))
        if kind == "hypercube":
            return Hypercube(int(cfg["n"]), cfg.get("side", 1.0), cfg.get("low", 0.0))
        if kind == "l1_ball":
            return L1Ball(int(cfg["n"]), cfg.get("radius", 1.0))
        if kind == "l2_ball":
            return L2Ball(int(cfg["n"]), cfg.get("radius", 1.0))
        if kind == "partition_matroid":
            return PartitionMatroidBase(cfg["parts"], cfg["ranks"])
    except KeyError as err:
        raise ValueError(f"domain {kind!r} is missing field {err}") from None
    raise ValueError(f"unknown domain kind {kind!r}")


def shrink_wrap(domain: DecisionSet, f: LossOracle, delta: float) -> LossOracle:
    """Rescale ``f`` so smoothing queries around points of ``domain`` stay inside it.

    Returns ``f'(x) = f((1 - delta/r) x)`` where ``r * B_2^n`` sits inside the
    domain. For x in the domain and ||u|| <= 1, ``(1 - delta/r)(x + delta*u)``
    is a convex combination of x and ``r*u``, hence feasible. ``f'`` keeps the
    Lipschitz constant of ``f``.
    """
    r = domain.inner_radius
    if r is None:
        raise ValueError(f"{domain.kind} has no inner ball; shrink wrapping needs one")
    if not 0 < delta < r:
        raise ValueError(f"need 0 < delta < inner radius {r}, got {delta}")
    scale = 1.0 - delta / r

    def batch(xs):
        return f.evaluate_many(scale * np.asarray(xs, dtype=float))

    wrapped = LossOracle(lambda x: f(scale * x), f.lipschitz, f.dimension, batch_value=batch)
    wrapped.scale = scale
    wrapped.inner = f
    return wrapped
