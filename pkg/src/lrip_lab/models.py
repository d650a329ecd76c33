"""Union-of-subspaces models, secant sampling, and covering-number machinery.

The model set is a union of N s-dimensional subspaces of R^d intersected
with the Euclidean ball of radius M.  Covering numbers are handled two ways:
closed-form upper bounds of union-bound type (log-scale), and a greedy
farthest-point oracle that certifies a covering of any sampled point set.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SamplingError
from .spaces import Pseudometric, norm_equivalence_factors

ORTHO_TOL = 1e-10

METHOD_THEORETICAL_UOS = "TheoreticalUoS"
METHOD_THEORETICAL_SECANT = "TheoreticalSecant"
METHOD_GREEDY_ORACLE = "GreedyOracle"


@dataclass(frozen=True)
class UnionOfSubspaces:
    """Model set: union of N norm-bounded subspaces, each given by an orthonormal basis.

    bases       tuple of N arrays of shape (d, s) with orthonormal columns
    norm_bound  radius M > 0 of the Euclidean ball intersected with every subspace
    """

    bases: tuple[np.ndarray, ...]
    norm_bound: float

    def __post_init__(self):
        if len(self.bases) < 1:
            raise InputError("model needs at least one subspace")
        if not self.norm_bound > 0:
            raise InputError(f"norm bound must be positive, got {self.norm_bound}")
        d, s = self.bases[0].shape
        if not 1 <= s <= d:
            raise InputError(f"need 1 <= s <= d, got s={s}, d={d}")
        frozen = []
        for i, B in enumerate(self.bases):
            B = np.asarray(B, dtype=float)
            if B.shape != (d, s):
                raise InputError(f"basis {i} has shape {B.shape}, expected {(d, s)}")
            gram_err = np.max(np.abs(B.T @ B - np.eye(s)))
            if gram_err > ORTHO_TOL:
                raise InputError(f"basis {i} is not orthonormal (|B'B - I| = {gram_err:.2e})")
            B = B.copy()
            B.setflags(write=False)
            frozen.append(B)
        object.__setattr__(self, "bases", tuple(frozen))

    @property
    def dim(self) -> int:
        return self.bases[0].shape[0]

    @property
    def subspace_dim(self) -> int:
        return self.bases[0].shape[1]

    @property
    def num_subspaces(self) -> int:
        return len(self.bases)

    @classmethod
    def random(cls, d: int, s: int, N: int, M: float, rng_seed) -> "UnionOfSubspaces":
        """N random s-dimensional subspaces (orthonormalized Gaussian frames)."""
        rng = _as_generator(rng_seed)
        bases = []
        for _ in range(N):
            Q, _ = np.linalg.qr(rng.normal(size=(d, s)))
            bases.append(Q[:, :s])
        return cls(tuple(bases), M)

    @classmethod
    def axes(cls, d: int, M: float) -> "UnionOfSubspaces":
        """The d coordinate axes of R^d (the 1-sparse model)."""
        eye = np.eye(d)
        return cls(tuple(eye[:, [i]] for i in range(d)), M)

    @classmethod
    def k_sparse(cls, d: int, k: int, M: float) -> "UnionOfSubspaces":
        """All C(d, k) coordinate subspaces; intended for small d only."""
        eye = np.eye(d)
        bases = tuple(eye[:, list(supp)] for supp in itertools.combinations(range(d), k))
        return cls(bases, M)

    def membership_defect(self, x) -> float:
        """min_i ||x - B_i B_i' x||, zero exactly when x lies in some subspace."""
        x = np.asarray(x, dtype=float)
        return min(float(np.linalg.norm(x - B @ (B.T @ x))) for B in self.bases)

    def contains(self, x, tol: float = ORTHO_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return self.membership_defect(x) <= tol and np.linalg.norm(x) <= self.norm_bound + tol

    def to_json(self) -> dict:
        """JSON object {d, s, N, M, bases} with column-major basis entries."""
        return {
            "d": self.dim,
            "s": self.subspace_dim,
            "N": self.num_subspaces,
            "M": self.norm_bound,
            "bases": [[float(v) for v in B.flatten(order="F")] for B in self.bases],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UnionOfSubspaces":
        d, s = int(obj["d"]), int(obj["s"])
        bases = tuple(
            np.asarray(flat, dtype=float).reshape((d, s), order="F") for flat in obj["bases"]
        )
        if len(bases) != int(obj["N"]):
            raise InputError("basis count does not match N")
        return cls(bases, float(obj["M"]))


@dataclass(frozen=True)
class SecantSample:
    """One normalized secant: (x - x') / d(x, x') together with its endpoints."""

    direction: np.ndarray
    endpoints: tuple[np.ndarray, np.ndarray]
    gap: float

    def __post_init__(self):
        if not self.gap > 0:
            raise InputError("secant gap must be positive")
        x, x2 = self.endpoints
        err = np.linalg.norm(self.direction * self.gap - (x - x2))
        if err > 1e-10:
            raise InputError(f"direction * gap does not reconstruct x - x' (err={err:.2e})")


@dataclass(frozen=True)
class CoveringBound:
    """Covering-number statement at radius ``radius``, stored on the log scale.

    method distinguishes closed-form union-bound estimates from the greedy
    oracle, which carries the certified center indices of the sampled set.
    """

    radius: float
    log_count: float
    method: str
    params: dict = field(default_factory=dict)
    centers: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.log_count < 0:
            raise InputError("covering count cannot be below 1")

    @property
    def count(self) -> float:
        return math.exp(self.log_count)


def _as_generator(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def _uniform_ball_coeffs(rng: np.random.Generator, n: int, s: int, M: float) -> np.ndarray:
    """n coefficient vectors uniform in the radius-M ball of R^s."""
    z = rng.normal(size=(n, s))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = M * rng.uniform(size=(n, 1)) ** (1.0 / s)
    return z / norms * radii


def sample_model_point(model: UnionOfSubspaces, rng_seed) -> np.ndarray:
    """One point of the model: uniform subspace index, coefficients uniform in the ball.

    The output lies in some S_i intersected with B_M exactly by construction.
    """
    rng = _as_generator(rng_seed)
    i = int(rng.integers(model.num_subspaces))
    z = _uniform_ball_coeffs(rng, 1, model.subspace_dim, model.norm_bound)[0]
    return model.bases[i] @ z


def sample_model_points(model: UnionOfSubspaces, n: int, rng_seed) -> np.ndarray:
    """n model points as rows; same law as sample_model_point."""
    rng = _as_generator(rng_seed)
    idx = rng.integers(model.num_subspaces, size=n)
    Z = _uniform_ball_coeffs(rng, n, model.subspace_dim, model.norm_bound)
    pts = np.empty((n, model.dim))
    for i in range(model.num_subspaces):
        sel = idx == i
        pts[sel] = Z[sel] @ model.bases[i].T
    return pts


def project_to_model(model: UnionOfSubspaces, x, metric: Pseudometric) -> np.ndarray:
    """Metric projection onto the model.

    Per subspace, the orthogonal projection clipped to the ball minimizes the
    Euclidean distance, and both implemented metrics are monotone in it, so
    the per-subspace candidate is metric-optimal; the best subspace wins and
    ties break to the lowest index.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise InputError(f"x has shape {x.shape}, expected ({model.dim},)")
    best = None
    best_dist = np.inf
    for B in model.bases:
        p = B @ (B.T @ x)
        nrm = np.linalg.norm(p)
        if nrm > model.norm_bound:
            p = p * (model.norm_bound / nrm)
        dist = metric.dist(x, p)
        if dist < best_dist:
            best, best_dist = p, dist
    return best


def sample_secant(
    model: UnionOfSubspaces,
    metric: Pseudometric,
    rng_seed,
    eps: float | None = None,
    anchor: np.ndarray | None = None,
    max_attempts: int = 100_000,
) -> SecantSample:
    """One element of the normalized secant set (x - x') / d(x, x').

    With ``anchor`` the first endpoint is pinned to it (it must belong to the
    model); with ``eps`` the pair is constrained to gap d(x, x') <= eps via
    rejection sampling around the anchor with a shrinking proposal radius.
    """
    rng = _as_generator(rng_seed)
    if eps is not None and not eps > 0:
        raise InputError(f"eps must be positive, got {eps}")
    if anchor is not None:
        anchor = np.asarray(anchor, dtype=float)
        if not model.contains(anchor, tol=1e-8):
            raise InputError("anchor does not lie in the model")

    if eps is None:
        for _ in range(max_attempts):
            x = anchor if anchor is not None else sample_model_point(model, rng)
            x2 = sample_model_point(model, rng)
            gap = metric.dist(x, x2)
            if gap > 0:
                return SecantSample((x - x2) / gap, (x, x2), gap)
        raise SamplingError(f"no pair with positive gap in {max_attempts} attempts")

    base = anchor if anchor is not None else sample_model_point(model, rng)
    # Euclidean proposal radius matching the requested metric gap, shrunk on failure.
    try:
        radius = metric.gap_for(min(eps, 0.999 * np.sqrt(2)) if metric.kind != "euclidean" else eps)
    except InputError:
        radius = eps
    d = model.dim
    attempts = 0
    while attempts < max_attempts:
        block = min(256, max_attempts - attempts)
        idx = rng.integers(model.num_subspaces, size=block)
        noise = rng.normal(size=(block, d)) * (radius / np.sqrt(d))
        for k in range(block):
            attempts += 1
            B = model.bases[idx[k]]
            p = B @ (B.T @ (base + noise[k]))
            nrm = np.linalg.norm(p)
            if nrm > model.norm_bound:
                p = p * (model.norm_bound / nrm)
            gap = metric.dist(base, p)
            if 0 < gap <= eps:
                return SecantSample((base - p) / gap, (base, p), gap)
        radius *= 0.7
        if radius < 1e-300:
            break
    raise SamplingError(
        f"no pair with gap in (0, {eps}] around the anchor in {max_attempts} attempts"
    )


def _metric_diameter(model: UnionOfSubspaces, metric: Pseudometric) -> float:
    return float(metric.from_gap(2.0 * model.norm_bound))


def covering_bound_model(
    model: UnionOfSubspaces,
    metric: Pseudometric,
    delta: float,
    c0: float = 3.0,
) -> CoveringBound:
    """Union-bound covering estimate for the model at metric radius delta.

    log N(model, d, delta) <= log N + s log(c0 L M / delta), with (l, L) the
    norm-equivalence factors of the metric on B_M and c0 the absolute
    ball-covering constant (default 3).  Radii at or above the model diameter
    need a single ball.
    """
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    _, L = norm_equivalence_factors(metric, model.norm_bound)
    params = {
        "N": model.num_subspaces,
        "s": model.subspace_dim,
        "M": model.norm_bound,
        "c0": float(c0),
        "metric": metric.kind,
        "L": L,
        "diameter": _metric_diameter(model, metric),
    }
    return CoveringBound(
        radius=float(delta),
        log_count=_model_log_count(params, delta),
        method=METHOD_THEORETICAL_UOS,
        params=params,
    )


def _model_log_count(params: dict, delta: float) -> float:
    if delta >= params["diameter"]:
        return 0.0
    per_subspace = params["s"] * np.log(params["c0"] * params["L"] * params["M"] / delta)
    return float(max(0.0, np.log(params["N"]) + max(0.0, per_subspace)))


def covering_bound_secant(
    model: UnionOfSubspaces,
    metric: Pseudometric,
    delta: float,
    c0: float = 3.0,
) -> CoveringBound:
    """Union-bound covering estimate for the normalized secant set.

    Normalized secants of a union of N subspaces live in the union of the
    N^2 pairwise sums (dimension <= 2s) with norm controlled by M/l, giving

        log N(secants, d, delta) <= 2 log N + 2s log(c0 L M / (l delta)).
    """
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    ell, L = norm_equivalence_factors(metric, model.norm_bound)
    # normalized secants have unit Euclidean norm under the Euclidean metric
    # and metric values capped at sqrt(2) under the kernel metric, so the
    # secant set's metric diameter is bounded accordingly
    diameter = 2.0 if metric.kind == "euclidean" else float(np.sqrt(2.0))
    params = {
        "N": model.num_subspaces,
        "s": model.subspace_dim,
        "M": model.norm_bound,
        "c0": float(c0),
        "metric": metric.kind,
        "ell": ell,
        "L": L,
        "diameter": diameter,
    }
    return CoveringBound(
        radius=float(delta),
        log_count=_secant_log_count(params, delta),
        method=METHOD_THEORETICAL_SECANT,
        params=params,
    )


def _secant_log_count(params: dict, delta: float) -> float:
    if delta >= params["diameter"]:
        return 0.0
    per_pair = 2 * params["s"] * np.log(
        params["c0"] * params["L"] * params["M"] / (params["ell"] * delta)
    )
    return float(max(0.0, 2.0 * np.log(params["N"]) + max(0.0, per_pair)))


def reevaluate_covering_bound(bound: CoveringBound, delta: float) -> CoveringBound:
    """Same bound family as ``bound``, recomputed at a new radius from its stored parameters."""
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    if bound.method == METHOD_THEORETICAL_UOS:
        log_count = _model_log_count(bound.params, delta)
    elif bound.method == METHOD_THEORETICAL_SECANT:
        log_count = _secant_log_count(bound.params, delta)
    else:
        raise InputError(f"cannot re-evaluate covering bound of method {bound.method!r}")
    return CoveringBound(
        radius=float(delta), log_count=log_count, method=bound.method, params=dict(bound.params)
    )


def greedy_cover(points, metric: Pseudometric, delta: float) -> CoveringBound:
    """Greedy farthest-point covering of a sampled point set.

    Starts from the first point and repeatedly promotes the point farthest
    from the current centers until every point is within delta of a center.
    The center count is a certified covering number of the sampled set and a
    2-approximation witness for its optimal covering.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise InputError("greedy_cover needs at least one point")
    if not delta > 0:
        raise InputError(f"delta must be positive, got {delta}")
    n = pts.shape[0]
    centers = [0]
    min_dist = metric.dist_batch(pts, pts[0])
    while True:
        far = int(np.argmax(min_dist))
        if min_dist[far] <= delta:
            break
        centers.append(far)
        min_dist = np.minimum(min_dist, metric.dist_batch(pts, pts[far]))
    assert np.all(min_dist <= delta), "greedy cover failed to certify coverage"
    return CoveringBound(
        radius=float(delta),
        log_count=float(np.log(len(centers))),
        method=METHOD_GREEDY_ORACLE,
        params={"points": n},
        centers=tuple(centers),
    )
