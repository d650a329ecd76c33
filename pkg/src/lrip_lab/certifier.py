"""Empirical and theoretical certification of LRIP / BP / IOP constants.

Empirical estimators sample model pairs and report worst-case ratios; they
understate the true suprema and are labeled accordingly (pairs_tested plus
near/far stratification travel with every report).  The failure-probability
calculators are pure arithmetic in the covering bounds and concentration
exponents and are labeled as theoretical bounds.

Conventions.  The lower restricted isometry property (LRIP) at constant
alpha and slack eta reads

    d(x, x') <= alpha ||Psi x - Psi x'|| + eta        for model pairs,

the boundedness property (BP) at constant beta reads

    ||Psi x - Psi x_S|| <= beta d_G(x, x_S)           for ambient x, model x_S,

and the instance-optimality property (IOP) at constants (A, B, lambda) reads

    d(x*, xhat) <= A d'(x*, model) + B ||e|| + lambda

with the augmented metric d'(u, v) = d(u, v) + B ||Psi u - Psi v||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderOptions, decode_linear, decode_nonlinear, residual_certificate
from .errors import InputError, SamplingError
from .models import (
    CoveringBound,
    UnionOfSubspaces,
    project_to_model,
    reevaluate_covering_bound,
    sample_model_points,
)
from .operators import LinearGaussianOperator, NonlinearLripHypotheses
from .spaces import Pseudometric, meas_norm

MODE_UNIFORM = "Uniform"
MODE_ANCHORED = "NonUniformAnchor"
MODE_FROM_IOP = "FromIopWitness"


def _rng(seed, *path) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


def wilson_upper(successes: int, n: int, z: float = 1.959963984540054) -> float:
    """Upper Wilson-interval limit for a binomial proportion."""
    if n <= 0:
        raise InputError("need n > 0")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = phat + z * z / (2 * n)
    rad = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return min(1.0, (center + rad) / denom)


# ---------------------------------------------------------------------------
# LRIP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LripEstimate:
    """Empirical LRIP constant over sampled pairs.

    alpha_hat is the largest (d(x,x') - eta)_+ / ||Psi x - Psi x'||; +inf
    signals a collapsed pair (zero measurement gap at metric gap above eta),
    which is a violation state, not an error.  t_hat = 1 - 1/alpha_hat maps
    the constant back to the isometry-defect parameterization
    alpha = (1 - t)^{-1}.
    """

    alpha_hat: float
    eta: float
    pairs_tested: int
    worst_pair: tuple[np.ndarray, np.ndarray] | None
    mode: str
    strata: dict = field(default_factory=dict)
    seed: int | None = None
    violation_count: int = 0
    violating_pair: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def t_hat(self) -> float:
        if self.alpha_hat == np.inf:
            return 1.0
        if self.alpha_hat == 0:
            return -np.inf
        return 1.0 - 1.0 / self.alpha_hat

    def reevaluate(self, op, metric: Pseudometric) -> float:
        """Recompute the ratio at the stored worst pair (consistency check)."""
        if self.worst_pair is None:
            return 0.0
        x, x2 = self.worst_pair
        num = max(metric.dist(x, x2) - self.eta, 0.0)
        den = meas_norm(op.apply(x) - op.apply(x2))
        if den == 0:
            return np.inf if num > 0 else 0.0
        return num / den

    def report_dict(self) -> dict:
        return {
            "mode": self.mode,
            "constants": {"alpha_hat": self.alpha_hat, "eta": self.eta, "t_hat": self.t_hat},
            "pairs_tested": self.pairs_tested,
            "strata": dict(self.strata),
            "violations": self.violation_count,
            "worst_cases": _pair_json(self.worst_pair),
            "seed": self.seed,
            "config_echo": {"eta": self.eta, "pairs": self.pairs_tested, "mode": self.mode},
            "label": "empirical",
        }


def _pair_json(pair):
    if pair is None:
        return None
    return [[float(v) for v in pair[0]], [float(v) for v in pair[1]]]


def _sample_near_points(model, metric, anchor, eps, n, rng, max_rounds=200):
    """Batch rejection sampling of model points at metric gap in (0, eps] from anchor.

    Proposes subspace-projected Gaussian perturbations of the anchor and
    shrinks the proposal radius geometrically while acceptances are missing.
    """
    try:
        radius = metric.gap_for(min(eps, 0.999 * math.sqrt(2)) if metric.kind != "euclidean" else eps)
    except InputError:
        radius = eps
    out = np.empty((n, model.dim))
    got = 0
    for _ in range(max_rounds):
        want = n - got
        block = max(want * 2, 64)
        idx = rng.integers(model.num_subspaces, size=block)
        noise = rng.normal(size=(block, model.dim)) * (radius / math.sqrt(model.dim))
        cands = np.empty((block, model.dim))
        for i in range(model.num_subspaces):
            sel = idx == i
            if not np.any(sel):
                continue
            B = model.bases[i]
            cands[sel] = (anchor + noise[sel]) @ B @ B.T
        norms = np.linalg.norm(cands, axis=1)
        over = norms > model.norm_bound
        cands[over] *= (model.norm_bound / norms[over])[:, None]
        gaps = metric.dist_batch(cands, anchor)
        ok = (gaps > 0) & (gaps <= eps)
        take = min(int(ok.sum()), want)
        if take:
            out[got : got + take] = cands[ok][:take]
            got += take
        if got == n:
            return out
        radius *= 0.7
    raise SamplingError(f"could not sample {n} near pairs at eps={eps}")


def _extremal_linear_pairs(op: LinearGaussianOperator, model: UnionOfSubspaces):
    """Worst-ratio directions of a linear operator over every subspace-pair span.

    On the span W of S_i + S_j the ratio ||w|| / ||A w|| is maximized by the
    right singular vector of A W at the smallest singular value, so adding
    one pair per (i, j) makes the sampled maximum equal to the true supremum
    for the Euclidean metric.
    """
    pairs = []
    N = model.num_subspaces
    M = model.norm_bound
    for i in range(N):
        for j in range(i, N):
            stacked = np.hstack([model.bases[i], model.bases[j]])
            Q, R = np.linalg.qr(stacked)
            keep = np.abs(np.diag(R)) > 1e-12
            W = Q[:, : keep.sum()] if keep.any() else Q[:, :1]
            _, _, Vt = np.linalg.svd(op.matrix @ W, full_matrices=False)
            w = W @ Vt[-1]
            # split w = x - x' with x in S_i, x' in S_j, scaled into the ball
            AB = np.hstack([model.bases[i], -model.bases[j]])
            coef, *_ = np.linalg.lstsq(AB, w, rcond=None)
            a, b = coef[: model.subspace_dim], coef[model.subspace_dim :]
            scale = max(np.linalg.norm(a), np.linalg.norm(b))
            if scale <= 1e-14:
                continue
            c = M / scale
            pairs.append((model.bases[i] @ (a * c), model.bases[j] @ (b * c)))
    return pairs


def estimate_lrip(
    op,
    model: UnionOfSubspaces,
    metric: Pseudometric,
    pairs: int,
    rng_seed: int,
    anchor: np.ndarray | None = None,
    eta: float = 0.0,
    near_eps: float = 0.1,
    near_fraction: float | None = None,
) -> LripEstimate:
    """Empirical LRIP constant over sampled model pairs.

    Uniform mode samples both endpoints; anchored mode fixes the first
    endpoint (non-uniform guarantee for that signal).  Both modes stratify
    the budget into near pairs (metric gap <= near_eps, sampled around the
    anchor, or around per-pair random anchors in uniform mode) and far pairs,
    so small-gap behavior is always probed; near_fraction defaults to 1/2.

    For linear operators under the Euclidean metric the sample is enriched
    with the per-subspace-pair extremal directions of the operator, which
    makes alpha_hat the exact supremum for union-of-subspaces models.

    Pairs whose measurement gap vanishes while the metric gap exceeds eta are
    LRIP violations and set alpha_hat = +inf.
    """
    if pairs < 1:
        raise InputError(f"pairs must be >= 1, got {pairs}")
    if eta < 0:
        raise InputError("eta must be nonnegative")
    rng_pairs = _rng(rng_seed, 0)
    anchored = anchor is not None
    if anchored:
        anchor = np.asarray(anchor, dtype=float)
        if not model.contains(anchor, tol=1e-8):
            raise InputError("anchor does not lie in the model")
    if near_fraction is None:
        near_fraction = 0.5
    n_near = int(round(pairs * near_fraction))
    n_far = pairs - n_near

    X_list, X2_list, strata = [], [], {"near": 0, "far": 0, "extremal": 0}

    if n_far:
        if anchored:
            X_list.append(np.broadcast_to(anchor, (n_far, model.dim)))
        else:
            X_list.append(sample_model_points(model, n_far, rng_pairs))
        X2_list.append(sample_model_points(model, n_far, rng_pairs))
        strata["far"] = n_far
    if n_near:
        if anchored:
            firsts = np.broadcast_to(anchor, (n_near, model.dim))
            try:
                seconds = _sample_near_points(model, metric, anchor, near_eps, n_near, rng_pairs)
            except SamplingError:
                seconds = sample_model_points(model, n_near, rng_pairs)
                strata["near_fallback"] = n_near
        else:
            firsts = sample_model_points(model, n_near, rng_pairs)
            seconds = np.empty_like(firsts)
            for k in range(n_near):
                try:
                    seconds[k] = _sample_near_points(model, metric, firsts[k], near_eps, 1, rng_pairs)[0]
                except SamplingError:
                    seconds[k] = sample_model_points(model, 1, rng_pairs)[0]
        X_list.append(np.asarray(firsts, dtype=float))
        X2_list.append(seconds)
        strata["near"] = n_near

    if (
        not anchored
        and isinstance(op, LinearGaussianOperator)
        and metric.kind == "euclidean"
        and model.num_subspaces <= 64
    ):
        extremal = _extremal_linear_pairs(op, model)
        if extremal:
            X_list.append(np.array([p[0] for p in extremal]))
            X2_list.append(np.array([p[1] for p in extremal]))
            strata["extremal"] = len(extremal)

    X = np.vstack(X_list)
    X2 = np.vstack(X2_list)
    dvals = metric.dist_pairs(X, X2)
    gaps = np.linalg.norm(op.apply_batch(X) - op.apply_batch(X2), axis=1)
    numer = np.maximum(dvals - eta, 0.0)

    collapsed = (gaps == 0) & (numer > 0)
    violation_count = int(collapsed.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(numer > 0, numer / np.where(gaps > 0, gaps, np.nan), 0.0)
    ratios = np.where(collapsed, np.inf, np.nan_to_num(ratios, nan=0.0, posinf=np.inf))

    worst = int(np.argmax(ratios))
    alpha_hat = float(ratios[worst])
    return LripEstimate(
        alpha_hat=alpha_hat,
        eta=eta,
        pairs_tested=int(X.shape[0]),
        worst_pair=(X[worst].copy(), X2[worst].copy()),
        mode=MODE_ANCHORED if anchored else MODE_UNIFORM,
        strata=strata,
        seed=rng_seed,
        violation_count=violation_count,
        violating_pair=(X[collapsed][0].copy(), X2[collapsed][0].copy()) if violation_count else None,
    )


# ---------------------------------------------------------------------------
# BP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BpEstimate:
    """Empirical boundedness constant max ||Psi x - Psi x_S|| / d_G(x, x_S)."""

    beta_hat: float
    pairs_tested: int
    metric_G: Pseudometric
    worst_pair: tuple[np.ndarray, np.ndarray] | None
    seed: int | None = None

    def reevaluate(self, op) -> float:
        if self.worst_pair is None:
            return 0.0
        x, xs = self.worst_pair
        den = self.metric_G.dist(x, xs)
        return meas_norm(op.apply(x) - op.apply(xs)) / den if den > 0 else 0.0

    def report_dict(self) -> dict:
        return {
            "mode": "BP",
            "constants": {"beta_hat": self.beta_hat},
            "pairs_tested": self.pairs_tested,
            "worst_cases": _pair_json(self.worst_pair),
            "seed": self.seed,
            "config_echo": {
                "pairs": self.pairs_tested,
                "metric_G": {"kind": self.metric_G.kind, "sigma": self.metric_G.sigma},
            },
            "label": "empirical",
        }


def estimate_bp(
    op,
    model: UnionOfSubspaces,
    metric_G: Pseudometric,
    pairs: int,
    rng_seed: int,
    perturbation_scale: float = 1.0,
) -> BpEstimate:
    """Empirical BP constant over pairs (ambient point, model point).

    Ambient points are model points displaced by isotropic Gaussian noise of
    root-mean-square norm ``perturbation_scale``; the model endpoint is an
    independent model point.  Zero-distance pairs are skipped.
    """
    if pairs < 1:
        raise InputError(f"pairs must be >= 1, got {pairs}")
    rng = _rng(rng_seed, 1)
    xs = sample_model_points(model, pairs, rng)
    x = sample_model_points(model, pairs, rng)
    x = x + rng.normal(size=x.shape) * (perturbation_scale / math.sqrt(model.dim))
    dG = metric_G.dist_pairs(x, xs)
    keep = dG > 0
    x, xs, dG = x[keep], xs[keep], dG[keep]
    if x.shape[0] == 0:
        return BpEstimate(0.0, 0, metric_G, None, seed=rng_seed)
    gaps = np.linalg.norm(op.apply_batch(x) - op.apply_batch(xs), axis=1)
    ratios = gaps / dG
    worst = int(np.argmax(ratios))
    return BpEstimate(
        beta_hat=float(ratios[worst]),
        pairs_tested=int(x.shape[0]),
        metric_G=metric_G,
        worst_pair=(x[worst].copy(), xs[worst].copy()),
        seed=rng_seed,
    )


# ---------------------------------------------------------------------------
# IOP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IopTrial:
    x_true: np.ndarray
    noise_norm: float
    decode_dist: float
    model_dist: float
    lambda_eff: float
    satisfied: bool
    reason: str = ""

    def check(self, A: float, B: float) -> bool:
        return self.decode_dist <= A * self.model_dist + B * self.noise_norm + self.lambda_eff


@dataclass(frozen=True)
class IopWitness:
    """Instance-optimality trial transcript at constants (A, B, lambda)."""

    A: float
    B: float
    lam: float
    trials: tuple[IopTrial, ...]
    mode: str
    seed: int | None = None

    @property
    def satisfied_count(self) -> int:
        return sum(t.satisfied for t in self.trials)

    @property
    def all_satisfied(self) -> bool:
        return self.satisfied_count == len(self.trials)

    def report_dict(self) -> dict:
        return {
            "mode": self.mode,
            "constants": {"A": self.A, "B": self.B, "lambda": self.lam},
            "pairs_tested": len(self.trials),
            "satisfied": self.satisfied_count,
            "worst_cases": [
                {
                    "decode_dist": t.decode_dist,
                    "model_dist": t.model_dist,
                    "noise_norm": t.noise_norm,
                    "lambda_eff": t.lambda_eff,
                    "reason": t.reason,
                }
                for t in self.trials
                if not t.satisfied
            ][:8],
            "seed": self.seed,
            "config_echo": {"A": self.A, "B": self.B, "lambda": self.lam,
                            "trials": len(self.trials), "mode": self.mode},
            "label": "empirical",
        }


def _decode(op, model, y, decoder_opts, rng_seed, metric):
    if isinstance(op, LinearGaussianOperator):
        return decode_linear(op, model, y)
    return decode_nonlinear(op, model, y, opts=decoder_opts, rng_seed=rng_seed, metric=metric)


def _noise_vector(op, norm: float, rng) -> np.ndarray:
    if norm == 0:
        return np.zeros(op.m, dtype=complex)
    if isinstance(op, LinearGaussianOperator):
        e = rng.normal(size=op.m).astype(complex)
    else:
        e = rng.normal(size=op.m) + 1j * rng.normal(size=op.m)
    return e * (norm / np.linalg.norm(e))


def check_iop_inequality(
    op,
    model: UnionOfSubspaces,
    metric: Pseudometric,
    decoder_opts: DecoderOptions | None,
    A: float,
    B: float,
    lam: float,
    trials: int,
    noise_scale: float,
    model_error_scale: float,
    rng_seed: int,
    uniform_candidates: int = 64,
) -> IopWitness:
    """Monte-Carlo check of the instance-optimality inequality.

    Each trial draws a signal x* = model point + isotropic perturbation of
    RMS norm ``model_error_scale``, noise of exact norm ``noise_scale``,
    decodes y = Psi(x*) + e, and checks

        d(x*, xhat) <= A inf d'(x*, c) + B ||e|| + lambda_eff

    with d'(u, v) = d(u, v) + B ||Psi u - Psi v||.  The infimum runs over the
    metric projection of x* plus ``uniform_candidates`` sampled model points
    (set to 0 for the non-uniform check, which evaluates d' at the
    projection only).  lambda_eff augments lambda by the decoder's residual
    certificate; a decoder that failed to converge marks the trial
    unsatisfied with a reason rather than raising.
    """
    if min(A, B, lam) < 0:
        raise InputError("A, B, lambda must be nonnegative")
    decoder_opts = decoder_opts or DecoderOptions()
    out = []
    for k in range(trials):
        rng = _rng(rng_seed, 2, k)
        x0 = sample_model_points(model, 1, rng)[0]
        xstar = x0 + rng.normal(size=model.dim) * (model_error_scale / math.sqrt(model.dim))
        e = _noise_vector(op, noise_scale, rng)
        y = op.apply(xstar) + e
        result = _decode(op, model, y, decoder_opts, rng_seed=int(rng.integers(2**31)), metric=metric)
        decode_dist = metric.dist(xstar, result.xhat)

        proj = project_to_model(model, xstar, metric)
        cands = [proj]
        if uniform_candidates:
            cands.extend(sample_model_points(model, uniform_candidates, rng))
        psi_star = op.apply(xstar)
        dprime = min(
            metric.dist(xstar, c) + B * meas_norm(psi_star - op.apply(c)) for c in cands
        )

        gap = residual_certificate(result, op, model, y, decoder_opts.grid_oracle)
        lam_eff = lam + max(gap, 0.0)
        if not result.converged:
            out.append(IopTrial(xstar, noise_scale, decode_dist, dprime, np.inf, False,
                                reason="decoder did not converge"))
            continue
        satisfied = decode_dist <= A * dprime + B * noise_scale + lam_eff
        out.append(IopTrial(xstar, noise_scale, decode_dist, dprime, lam_eff, bool(satisfied)))
    return IopWitness(
        A=A, B=B, lam=lam, trials=tuple(out),
        mode="uniform" if uniform_candidates else "non-uniform",
        seed=rng_seed,
    )


def lrip_from_iop_witness(
    op,
    model: UnionOfSubspaces,
    metric: Pseudometric,
    decoder_opts: DecoderOptions | None,
    B: float,
    lam: float,
    pairs: int,
    rng_seed: int,
) -> LripEstimate:
    """LRIP induced by an instance-optimal decoder, verified constructively.

    For sampled model pairs (x, x') the decoder is run on y = Psi(x'), which
    realizes the reduction from instance optimality to the LRIP with
    constant alpha = B and slack eta = 2 lambda; every pair is then checked
    against d(x, x') <= B ||Psi x - Psi x'|| + 2 lambda_eff, with lambda_eff
    augmented by the decoder's residual certificate.
    """
    if pairs < 1:
        raise InputError(f"pairs must be >= 1, got {pairs}")
    decoder_opts = decoder_opts or DecoderOptions()
    rng = _rng(rng_seed, 3)
    X = sample_model_points(model, pairs, rng)
    X2 = sample_model_points(model, pairs, rng)

    worst_ratio, worst_idx = -1.0, 0
    violation_count = 0
    violating = None
    lam_eff_max = lam
    for k in range(pairs):
        y = op.apply(X2[k])
        result = _decode(op, model, y, decoder_opts, rng_seed=int(rng.integers(2**31)), metric=metric)
        gap = residual_certificate(result, op, model, y, decoder_opts.grid_oracle)
        lam_eff = lam + max(gap, 0.0) if result.converged else np.inf
        lam_eff_max = max(lam_eff_max, lam_eff if np.isfinite(lam_eff) else lam)
        d = metric.dist(X[k], X2[k])
        psn = meas_norm(op.apply(X[k]) - y)
        eta_eff = 2.0 * lam_eff
        if d > B * psn + eta_eff + 1e-12:
            violation_count += 1
            if violating is None:
                violating = (X[k].copy(), X2[k].copy())
        numer = max(d - eta_eff, 0.0)
        ratio = np.inf if (psn == 0 and numer > 0) else (numer / psn if psn > 0 else 0.0)
        if ratio > worst_ratio:
            worst_ratio, worst_idx = ratio, k

    return LripEstimate(
        alpha_hat=float(worst_ratio),
        eta=2.0 * lam,
        pairs_tested=pairs,
        worst_pair=(X[worst_idx].copy(), X2[worst_idx].copy()),
        mode=MODE_FROM_IOP,
        strata={"far": pairs},
        seed=rng_seed,
        violation_count=violation_count,
        violating_pair=violating,
    )


# ---------------------------------------------------------------------------
# Concentration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationEstimate:
    """Empirical one-sided deviation probabilities of the normalized measurement gap.

    p_hat[i] estimates P(||Psi x - Psi x'|| / d(x, x') - 1 <= -t_grid[i])
    over operator draws; c_hat = -log p_hat with a +inf sentinel at zero
    observed failures, where the Wilson upper interval limit supplies a
    finite lower confidence bound c_lower.  c_hat_monotone applies a running
    maximum (the exponent must be nondecreasing in t); indices where it
    changed anything are flagged.
    """

    t_grid: tuple[float, ...]
    p_hat: tuple[float, ...]
    c_hat: tuple[float, ...]
    c_hat_monotone: tuple[float, ...]
    monotone_adjusted: tuple[bool, ...]
    wilson_p_upper: tuple[float, ...]
    c_lower: tuple[float, ...]
    draws: int
    m: int
    seed: int | None = None

    def report_dict(self) -> dict:
        return {
            "mode": "concentration",
            "constants": {"m": self.m, "draws": self.draws},
            "pairs_tested": self.draws,
            "t_grid": list(self.t_grid),
            "p_hat": list(self.p_hat),
            "c_hat": [c if np.isfinite(c) else None for c in self.c_hat],
            "c_hat_monotone": [c if np.isfinite(c) else None for c in self.c_hat_monotone],
            "monotone_adjusted": list(self.monotone_adjusted),
            "wilson_p_upper": list(self.wilson_p_upper),
            "c_lower": list(self.c_lower),
            "seed": self.seed,
            "config_echo": {"draws": self.draws, "m": self.m, "t_grid": list(self.t_grid)},
            "label": "empirical",
        }


def estimate_concentration(
    op_factory,
    pair,
    metric: Pseudometric,
    draws: int,
    t_grid,
    rng_seed: int = 0,
) -> ConcentrationEstimate:
    """Estimate the concentration exponent on a fixed pair over operator draws.

    op_factory maps an integer seed to a fresh operator; draws are keyed by
    derived seeds so the estimate is reproducible and worker-count
    independent.
    """
    if draws < 100:
        raise InputError(f"need draws >= 100, got {draws}")
    x, x2 = (np.asarray(p, dtype=float) for p in pair)
    d = metric.dist(x, x2)
    if not d > 0:
        raise InputError("pair must have positive metric distance")
    t_grid = tuple(float(t) for t in t_grid)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(rng_seed).spawn(draws)]
    ratios = np.empty(draws)
    m = None
    for k, s in enumerate(seeds):
        op = op_factory(s)
        m = op.m
        ratios[k] = meas_norm(op.apply(x) - op.apply(x2)) / d
    p_hat, c_hat, wilson, c_lo = [], [], [], []
    for t in t_grid:
        fails = int(np.sum(ratios - 1.0 <= -t))
        p = fails / draws
        p_hat.append(p)
        c_hat.append(-math.log(p) if p > 0 else np.inf)
        wu = wilson_upper(fails, draws)
        wilson.append(wu)
        c_lo.append(-math.log(wu))
    order = np.argsort(t_grid)
    c_mono = list(c_hat)
    flags = [False] * len(t_grid)
    running = -np.inf
    for i in order:
        if c_mono[i] < running:
            c_mono[i] = running
            flags[i] = True
        else:
            running = c_mono[i]
    return ConcentrationEstimate(
        t_grid=t_grid,
        p_hat=tuple(p_hat),
        c_hat=tuple(c_hat),
        c_hat_monotone=tuple(c_mono),
        monotone_adjusted=tuple(flags),
        wilson_p_upper=tuple(wilson),
        c_lower=tuple(c_lo),
        draws=draws,
        m=int(m),
        seed=rng_seed,
    )


def fit_concentration_slope(estimates) -> dict:
    """Proportionality fit of the exponent against m t^2 / (1 + t).

    Through-origin least squares on all finite c_hat points, plus per-m
    sub-slopes; a stable per-m slope family is the empirical signature of
    c(t) growing linearly in m at the model shape t^2/(1+t).
    """
    xs, cs, per_m = [], [], {}
    for est in estimates:
        fx, fc = [], []
        for t, c in zip(est.t_grid, est.c_hat):
            if np.isfinite(c) and c > 0:
                fx.append(est.m * t * t / (1.0 + t))
                fc.append(c)
        xs.extend(fx)
        cs.extend(fc)
        if fx:
            fx, fc = np.asarray(fx), np.asarray(fc)
            per_m[est.m] = float(np.dot(fx, fc) / np.dot(fx, fx))
    if not xs:
        return {"slope": None, "per_m": {}}
    xs, cs = np.asarray(xs), np.asarray(cs)
    return {"slope": float(np.dot(xs, cs) / np.dot(xs, xs)), "per_m": per_m}


# ---------------------------------------------------------------------------
# Failure-probability calculators (theoretical bounds)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Prop1Result:
    rho: float
    delta_presumed: float | None

    def report_dict(self) -> dict:
        return {"mode": "prop1", "constants": {"rho": self.rho, "delta": self.delta_presumed},
                "label": "theoretical bound"}


def prop1_failure_bound(
    covering: CoveringBound,
    c_of_half_t: float,
    t: float | None = None,
    C: float | None = None,
) -> Prop1Result:
    """Union-bound failure probability for the linear covering argument.

    rho = min(1, N(secants, d, delta) * exp(-c(t/2))); when t and the
    secant Lipschitz constant C are supplied, the presumed covering radius
    delta = t / (2 C) is reported alongside.
    """
    if c_of_half_t < 0:
        raise InputError("concentration exponent must be nonnegative")
    rho = float(min(1.0, math.exp(min(covering.log_count - c_of_half_t, 0.0))))
    delta = t / (2.0 * C) if (t is not None and C is not None) else None
    return Prop1Result(rho=rho, delta_presumed=delta)


@dataclass(frozen=True)
class Prop2Result:
    rho: float
    eps: float
    delta: float
    delta_prime: float
    model_cover: CoveringBound
    secant_cover: CoveringBound

    def report_dict(self) -> dict:
        return {
            "mode": "prop2",
            "constants": {
                "rho": self.rho,
                "eps": self.eps,
                "delta": self.delta,
                "delta_prime": self.delta_prime,
                "log_model_cover": self.model_cover.log_count,
                "log_secant_cover": self.secant_cover.log_count,
            },
            "label": "theoretical bound",
        }


def prop2_failure_bound(
    model_cover: CoveringBound,
    secant_cover: CoveringBound,
    c_of_half_t: float,
    constants: NonlinearLripHypotheses,
    t: float,
) -> Prop2Result:
    """Failure probability of the nonlinear covering argument at level t.

    Chooses the radii at their caps,

        eps = min(eps0, t / (8 C2)),  delta' = t / (4 C3),
        delta = (t eps^2 / (4 C1)) / (eps + M_S),

    re-evaluates both covering bounds at those radii, and returns
    rho = min(1, (count_model + count_secant) * exp(-c(t/2))).
    """
    if not 0.0 < t < 1.0:
        raise InputError(f"need 0 < t < 1, got {t}")
    if c_of_half_t < 0:
        raise InputError("concentration exponent must be nonnegative")
    eps = min(constants.eps0, t / (8.0 * constants.C2))
    delta_prime = t / (4.0 * constants.C3)
    delta = (t * eps * eps / (4.0 * constants.C1)) / (eps + constants.M_S)
    mc = reevaluate_covering_bound(model_cover, delta)
    sc = reevaluate_covering_bound(secant_cover, delta_prime)
    log_total = float(np.logaddexp(mc.log_count, sc.log_count))
    rho = float(min(1.0, math.exp(min(log_total - c_of_half_t, 0.0))))
    return Prop2Result(rho=rho, eps=eps, delta=delta, delta_prime=delta_prime,
                       model_cover=mc, secant_cover=sc)


@dataclass(frozen=True)
class RecommendedM:
    """Measurement-count recommendation m = ceil(c0 t^-2 (s log(Md/(sigma t)) + log N + log 1/rho))."""

    m: int
    raw: float
    log_term_clipped: bool

    def report_dict(self) -> dict:
        return {"mode": "recommend-m",
                "constants": {"m": self.m, "raw": self.raw, "log_term_clipped": self.log_term_clipped},
                "label": "theoretical bound"}


def recommend_m(
    t: float,
    s: int,
    N: int,
    M: float,
    d: int,
    sigma: float,
    rho_target: float,
    c0: float = 1.0,
) -> RecommendedM:
    """Measurement count sufficient for the non-uniform LRIP at level t, failure rho_target."""
    if not 0.0 < t < 1.0:
        raise InputError(f"need 0 < t < 1, got {t}")
    if not 0.0 < rho_target < 1.0:
        raise InputError(f"need rho_target in (0, 1), got {rho_target}")
    arg = M * d / (sigma * t)
    clipped = arg <= 1.0
    log_term = max(0.0, math.log(arg))
    raw = c0 * t**-2 * (s * log_term + math.log(N) + math.log(1.0 / rho_target))
    return RecommendedM(m=max(1, math.ceil(raw)), raw=raw, log_term_clipped=clipped)


def estimate_operator_lipschitz(
    op,
    model: UnionOfSubspaces,
    metric: Pseudometric,
    pairs: int,
    rng_seed: int,
) -> dict:
    """Empirical Lipschitz constant sup ||Psi x - Psi x'|| / d(x, x') over model pairs.

    Supplies the constant C required by the linear covering argument; it is
    an empirical estimate and is flagged as such.
    """
    rng = _rng(rng_seed, 4)
    X = sample_model_points(model, pairs, rng)
    X2 = sample_model_points(model, pairs, rng)
    d = metric.dist_pairs(X, X2)
    keep = d > 0
    gaps = np.linalg.norm(op.apply_batch(X[keep]) - op.apply_batch(X2[keep]), axis=1)
    return {"C_hat": float(np.max(gaps / d[keep])), "pairs_tested": int(keep.sum()),
            "estimated": True}
