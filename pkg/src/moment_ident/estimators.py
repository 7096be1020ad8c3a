"""Identification algorithms for the treatment effect across two environments.

Four moment-based procedures, one per changed mechanism:

- ``estimate_eps_t``  -- treatment-noise change: ratio of moment gaps at
  the first order where the T-moments separate.
- ``estimate_eps_u``  -- latent-noise change: the same ratio recovers
  beta + gamma/alpha; the confounding slope gamma/alpha is then peeled off
  with :func:`get_ratio`.
- ``estimate_gamma``  -- change in the latent->outcome coefficient: a
  staged recovery over moments of the contrast X = r T - 2 Y.
- ``estimate_alpha``  -- change in the latent->treatment coefficient:
  solve a quadratic whose roots bracket beta, then pick the root whose
  residual series behaves like a function of the latent noise alone.

Plus OLS baselines, covariate residualization, and the shared-component
coefficient-ratio subroutine.  Every algorithm is written against the
moment-provider seam, so each runs unchanged on sample data or on exact
population moments (where recovery is exact under the method's
identifying assumptions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .empirical import (
    DEFAULT_ABS_FLOOR,
    DEFAULT_MAX_ORDER,
    DEFAULT_Z,
    EnvPairDataset,
    MomentEstimate,
    PairMoments,
    SamplePairMoments,
    is_nonzero,
    moment_diff_test,
)
from .model import ScenarioSpec, population_pairs

__all__ = [
    "EstimatorConfig",
    "EstimateReport",
    "EstimationError",
    "NoMomentDifferenceError",
    "SharedComponentNotFoundError",
    "GammaUnchangedError",
    "AlphaUnchangedError",
    "RootsNotRealError",
    "OrderSearchExhaustedError",
    "ZeroVarianceError",
    "RankDeficiencyError",
    "estimate_eps_t",
    "estimate_eps_u",
    "estimate_gamma",
    "estimate_alpha",
    "ols_separate",
    "ols_combined",
    "get_ratio",
    "get_ratio_estimate",
    "residualize",
    "METHODS",
]


class EstimationError(RuntimeError):
    """Base class for identification failures with a diagnosable cause."""


class NoMomentDifferenceError(EstimationError):
    """No T-moment up to the order cap separates the two environments."""


class SharedComponentNotFoundError(EstimationError):
    """No joint-cumulant order reveals a shared non-Gaussian component."""


class GammaUnchangedError(EstimationError):
    """E[YT] agrees across environments: the outcome confounding did not move."""


class AlphaUnchangedError(EstimationError):
    """Both quadratic coefficients vanish: no alpha change is visible."""


class RootsNotRealError(EstimationError):
    """The quadratic has complex roots (expected only under sampling noise)."""


class OrderSearchExhaustedError(EstimationError):
    """An order search hit the cap without finding a usable statistic."""


class ZeroVarianceError(EstimationError):
    """The treatment has no variance in some environment."""


class RankDeficiencyError(ValueError):
    """Covariate matrix is rank deficient."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Finite-sample decision thresholds shared by all algorithms.

    ``z`` scales every "is this moment (difference) zero?" test;
    ``abs_floor`` is an absolute tolerance that makes the same tests exact
    on zero-se population statistics; ``max_order`` caps moment searches.
    """

    z: float = DEFAULT_Z
    abs_floor: float = DEFAULT_ABS_FLOOR
    max_order: int = DEFAULT_MAX_ORDER
    ks_alpha: float = 0.01

    def nonzero(self, est: MomentEstimate) -> bool:
        return is_nonzero(est, self.z, self.abs_floor)

    def differ(self, a: MomentEstimate, b: MomentEstimate) -> bool:
        return moment_diff_test(a, b, self.z, self.abs_floor)


DEFAULT_CONFIG = EstimatorConfig()


@dataclass
class EstimateReport:
    """Result of one identification run.

    ``beta_hat`` is a float, or a pair of candidates when produced by the
    auto pipeline's noise-ambiguous path.  ``order_found`` is the moment
    order (k or n*) the algorithm discovered; ``branch`` names the path
    taken where the algorithm has cases.
    """

    beta_hat: Union[float, tuple[float, float]]
    method: str
    order_found: Optional[int] = None
    branch: Optional[str] = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"method": self.method}
        if isinstance(self.beta_hat, tuple):
            out["candidates"] = [float(b) for b in self.beta_hat]
        else:
            out["beta_hat"] = float(self.beta_hat)
        out["order_found"] = self.order_found
        out["branch"] = self.branch
        out["diagnostics"] = _plain(self.diagnostics)
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, MomentEstimate):
        return {"value": obj.value, "se": obj.se}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


PairLike = Union[EnvPairDataset, ScenarioSpec, tuple]


def _as_pairs(data: PairLike, cfg: EstimatorConfig) -> tuple[PairMoments, PairMoments]:
    if isinstance(data, EnvPairDataset):
        return data.pairs(max_order=cfg.max_order)
    if isinstance(data, ScenarioSpec):
        return population_pairs(data, max_order=max(cfg.max_order, 12))
    if isinstance(data, tuple) and len(data) == 2 and all(
        isinstance(p, PairMoments) for p in data
    ):
        return data
    raise TypeError(
        "expected an EnvPairDataset, a ScenarioSpec, or a pair of moment providers"
    )


# ----------------------------------------------------------------------
# shared pieces
# ----------------------------------------------------------------------

def _smallest_moment_gap(p1: PairMoments, p2: PairMoments, cfg: EstimatorConfig):
    """First k with E[(T1)^k] statistically different from E[(T2)^k]."""
    for k in range(1, cfg.max_order + 1):
        m1 = p1.moment(k, 0)
        m2 = p2.moment(k, 0)
        if cfg.differ(m1, m2):
            return k, m1, m2
    raise NoMomentDifferenceError(
        f"no T-moment difference up to order {cfg.max_order}; the environments "
        "look identical or the change is in another mechanism"
    )


def _gap_ratio(p1: PairMoments, p2: PairMoments, cfg: EstimatorConfig):
    k, mk1, mk2 = _smallest_moment_gap(p1, p2, cfg)
    num = p1.moment(k - 1, 1) - p2.moment(k - 1, 1)
    den = mk1 - mk2
    return num / den, k


def _get_ratio_core(pair: PairMoments, cfg: EstimatorConfig):
    """Coefficient ratio a/b for (X1, X2) = (a e + e1, b e + e2).

    Searches the smallest order n >= 3 where kappa(X1, X2^{n-1}) is
    statistically nonzero; there the cumulants factor as a b^{n-1} k_n(e)
    and a^2 b^{n-2} k_n(e), so their ratio is a/b.  When no joint order
    fires but X2 alone shows non-Gaussian content, the shared coefficient
    is indistinguishable from zero and 0 is returned.
    """
    for n in range(3, cfg.max_order + 1):
        den = pair.cumulant(1, n - 1)
        if cfg.nonzero(den):
            num = pair.cumulant(2, n - 2)
            return num / den, n
    for n in range(3, cfg.max_order + 1):
        if cfg.nonzero(pair.cumulant(0, n)):
            return MomentEstimate(0.0), None
    raise SharedComponentNotFoundError(
        f"no joint cumulant up to order {cfg.max_order} is statistically nonzero"
    )


def get_ratio_estimate(
    x1: np.ndarray, x2: np.ndarray, config: Optional[EstimatorConfig] = None
) -> MomentEstimate:
    """Like :func:`get_ratio` but returns the estimate with its se."""
    cfg = config or DEFAULT_CONFIG
    pair = SamplePairMoments(np.asarray(x1), np.asarray(x2), max_order=cfg.max_order)
    ratio, _ = _get_ratio_core(pair, cfg)
    return ratio


def get_ratio(
    x1: np.ndarray, x2: np.ndarray, config: Optional[EstimatorConfig] = None
) -> float:
    """Ratio a/b of the shared-component coefficients of two mixtures.

    For X1 = a e + e1 and X2 = b e + e2 with e, e1, e2 mutually
    independent, zero mean, and e non-Gaussian at some moment order.
    """
    return get_ratio_estimate(x1, x2, config).value


# ----------------------------------------------------------------------
# the four algorithms
# ----------------------------------------------------------------------

def estimate_eps_t(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Treatment effect when only the treatment noise changed."""
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)
    beta, k = _gap_ratio(p1, p2, cfg)
    return EstimateReport(
        beta_hat=beta.value,
        method="alg1",
        order_found=k,
        diagnostics={"k": k, "se": beta.se},
    )


def estimate_eps_u(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Treatment effect when only the latent-confounder noise changed.

    The moment-gap ratio now converges to beta + gamma/alpha; gamma/alpha
    is recovered as the shared-component ratio of (r1 T - Y) against T in
    environment 1 and subtracted off.
    """
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)
    r1, k = _gap_ratio(p1, p2, cfg)
    residual_pair = p1.transform(r1.value, -1.0, 1.0, 0.0)  # (r1*T - Y, T)
    r2, n_shared = _get_ratio_core(residual_pair, cfg)
    beta = r1 - r2
    return EstimateReport(
        beta_hat=beta.value,
        method="alg2",
        order_found=k,
        diagnostics={
            "k": k,
            "r1": r1.value,
            "r2": r2.value,
            "ratio_order": n_shared,
            "se": beta.se,
        },
    )


def estimate_gamma(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Treatment effect when only the latent->outcome coefficient changed.

    Works in the alpha=1 rescaling, where gamma means gamma/alpha of the
    original parametrization; beta is unaffected.  The ratio
    r = dE[Y^2]/dE[YT] identifies 2 beta + gamma1 + gamma2, and second
    moments of the contrast X = r T - 2 Y split into a = gamma2 - gamma1
    and b = gamma2 + gamma1 pieces whose signs are revealed.  The first
    order n* where a higher-moment functional phi_n of (T, X) departs
    from its Gaussian prediction then yields either a (when the
    environments' phi differ; gamma1 is subsequently stripped via the
    shared-component ratio, averaged over both domains) or b directly.
    """
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)

    den = p2.moment(1, 1) - p1.moment(1, 1)
    if not cfg.nonzero(den):
        raise GammaUnchangedError(
            "E[Y T] does not differ across environments; no gamma change visible"
        )
    r = (p2.moment(0, 2) - p1.moment(0, 2)) / den

    d1 = p1.transform(1.0, 0.0, r.value, -2.0)  # (T, X) with X = r T - 2 Y
    d2 = p2.transform(1.0, 0.0, r.value, -2.0)
    a_tilde = (d1.moment(1, 1) - d2.moment(1, 1)) * 0.5
    b_tilde = (d1.moment(1, 1) + d2.moment(1, 1)) * 0.5

    def phi(n: int) -> tuple[MomentEstimate, MomentEstimate]:
        if n % 2 == 1:
            return d1.moment(n - 1, 1), d2.moment(n - 1, 1)
        corr1 = (n - 1) * (a_tilde + b_tilde) * d1.moment(n - 2, 0)
        corr2 = (n - 1) * (b_tilde - a_tilde) * d2.moment(n - 2, 0)
        return d1.moment(n - 1, 1) - corr1, d2.moment(n - 1, 1) - corr2

    n_star = None
    for n in range(3, cfg.max_order + 1):
        phi1, phi2 = phi(n)
        if cfg.nonzero(phi1) or cfg.nonzero(phi2):
            n_star = n
            break
    if n_star is None:
        raise OrderSearchExhaustedError(
            f"no order up to {cfg.max_order} separates the environments' "
            "higher moments; treatment noise may be Gaussian"
        )

    def psi(j: int) -> tuple[MomentEstimate, MomentEstimate]:
        if n_star % 2 == 1:
            return d1.moment(n_star - j, j), d2.moment(n_star - j, j)
        corr1 = (n_star - 1) * (a_tilde + b_tilde) * d1.moment(0, n_star - 2)
        corr2 = (n_star - 1) * (b_tilde - a_tilde) * d2.moment(0, n_star - 2)
        return d1.moment(j, n_star - j) - corr1, d2.moment(j, n_star - j) - corr2

    diagnostics = {
        "r": r.value,
        "a_tilde": a_tilde.value,
        "b_tilde": b_tilde.value,
        "n_star": n_star,
    }

    phi_diff = phi1 - phi2
    if cfg.nonzero(phi_diff):
        # the latent-noise contribution survives: recover a = gamma2 - gamma1
        j, l = (3, 2) if n_star % 2 == 1 else (1, n_star - 2)
        psi1, psi2 = psi(j)
        ratio = (psi1 - psi2) / phi_diff
        a_val = math.copysign(abs(ratio.value) ** (1.0 / l), a_tilde.value)
        # beta + gamma^(i) is known for both environments; stripping the
        # confounding slope works in either domain, and averaging the two
        # recoveries cancels the estimation error of a to first order
        per_env = []
        for pair_i, bg_i in ((p1, (r - a_val) * 0.5), (p2, (r + a_val) * 0.5)):
            shared_pair = pair_i.transform(bg_i.value, -1.0, 1.0, 0.0)
            r2, n_shared = _get_ratio_core(shared_pair, cfg)
            per_env.append((bg_i - r2, n_shared))
        beta = (per_env[0][0] + per_env[1][0]) * 0.5
        branch = "case1"
        diagnostics.update(
            {
                "a": a_val,
                "beta_plus_gamma1": (r.value - a_val) * 0.5,
                "beta_env1": per_env[0][0].value,
                "beta_env2": per_env[1][0].value,
                "ratio_order": per_env[0][1],
            }
        )
    else:
        j, l = (2, 1) if n_star % 2 == 1 else (1, n_star - 2)
        psi1, psi2 = psi(j)
        ratio = (psi1 + psi2) / (phi1 + phi2)
        b_val = math.copysign(abs(ratio.value) ** (1.0 / l), b_tilde.value)
        beta = (r - b_val) * 0.5
        branch = "case2"
        diagnostics["b"] = b_val

    diagnostics["se"] = beta.se
    return EstimateReport(
        beta_hat=beta.value,
        method="alg3",
        order_found=n_star,
        branch=branch,
        diagnostics=diagnostics,
    )


def _phi_order_search(env_pair: PairMoments, cfg: EstimatorConfig):
    """Smallest n with E[X^{n-1} T] - (n-1) E[X T] E[X^{n-2}] nonzero.

    env_pair is (T, X).  For the correct residual X = gamma eps_u + eps_y
    this functional first fires at the latent noise's non-Gaussian order.
    """
    for n in range(3, cfg.max_order + 1):
        stat = env_pair.moment(1, n - 1) - (n - 1) * env_pair.moment(1, 1) * env_pair.moment(0, n - 2)
        if cfg.nonzero(stat):
            return n, stat
    return None, None


def estimate_alpha(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Treatment effect when only the latent->treatment coefficient changed.

    Y - b T has environment-invariant second moment only at b = beta or at
    one spurious value; both are roots of a quadratic in observable
    moments.  The true root is the one whose residual's higher-moment
    functional stays proportional across environments (ratio matching
    E[XT]'s), or fires at the later order.
    """
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)

    qa = p1.moment(2, 0) - p2.moment(2, 0)  # quadratic coefficient
    qb = p1.moment(1, 1) - p2.moment(1, 1)  # half of minus the linear coefficient
    qc = p1.moment(0, 2) - p2.moment(0, 2)  # constant coefficient
    a_nz = cfg.nonzero(qa)
    b_nz = cfg.nonzero(qb)
    if not a_nz and not b_nz:
        raise AlphaUnchangedError(
            "both E[T^2] and E[TY] agree across environments; no alpha change visible"
        )

    if not a_nz:
        # degenerate quadratic (alpha1 = -alpha2): single linear root
        roots = [qc.value / (2.0 * qb.value)]
    else:
        disc = qb.value * qb.value - qa.value * qc.value
        scale = max(qb.value * qb.value, abs(qa.value * qc.value), 1e-300)
        if disc < -1e-12 * scale:
            raise RootsNotRealError(
                f"quadratic discriminant is negative ({disc:.3e}); "
                "statistical noise or assumptions violated"
            )
        if disc <= 1e-12 * scale:
            # double root up to rounding: the unique candidate (gamma = 0)
            roots = [qb.value / qa.value]
        else:
            sq = math.sqrt(disc)
            roots = [(qb.value - sq) / qa.value, (qb.value + sq) / qa.value]

    orders = []
    phis = []  # Phi statistics at the selected order, per root per env
    pairs_for_root = []
    for root in roots:
        e1 = p1.transform(1.0, 0.0, -root, 1.0)  # (T, X) with X = Y - root*T
        e2 = p2.transform(1.0, 0.0, -root, 1.0)
        n_i, _ = _phi_order_search(e1, cfg)
        orders.append(n_i)
        pairs_for_root.append((e1, e2))

    diagnostics: dict = {"roots": list(roots), "orders": list(orders)}

    if len(roots) == 1:
        # a unique root is algebraically forced to be the invariant effect;
        # the order search is diagnostic only (it exhausts when gamma = 0)
        selected = 0
    elif any(n is None for n in orders):
        if all(n is None for n in orders):
            raise OrderSearchExhaustedError(
                "residual order search exhausted for both roots; "
                "latent noise may be Gaussian"
            )
        raise OrderSearchExhaustedError(
            "residual order search exhausted for one root only; "
            "the scenario violates the algorithm's assumptions"
        )
    elif orders[0] != orders[1]:
        selected = int(orders[1] > orders[0])
    else:
        n = orders[0]

        def _ratio(a: float, b: float) -> float:
            return a / b if b != 0.0 else math.inf

        criteria = []
        for e1, e2 in pairs_for_root:
            def _phi_stat(e: PairMoments) -> MomentEstimate:
                return e.moment(1, n - 1) - (n - 1) * e.moment(1, 1) * e.moment(0, n - 2)

            r_xt = _ratio(e1.moment(1, 1).value, e2.moment(1, 1).value)
            r_phi = _ratio(_phi_stat(e1).value, _phi_stat(e2).value)
            crit = abs(r_xt - r_phi)
            criteria.append(crit if math.isfinite(crit) else math.inf)
        diagnostics["criteria"] = criteria
        selected = int(criteria[1] < criteria[0])

    diagnostics["selected_root"] = selected
    return EstimateReport(
        beta_hat=roots[selected],
        method="alg4",
        order_found=orders[selected],
        branch=f"root{selected + 1}",
        diagnostics=diagnostics,
    )


# ----------------------------------------------------------------------
# baselines and covariate handling
# ----------------------------------------------------------------------

def _env_slope(p: PairMoments, cfg: EstimatorConfig) -> MomentEstimate:
    var_t = p.moment(2, 0)
    if not is_nonzero(var_t, cfg.z, cfg.abs_floor):
        raise ZeroVarianceError("treatment variance is zero in one environment")
    return p.moment(1, 1) / var_t


def ols_separate(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Average of the per-environment no-intercept regression slopes."""
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)
    beta = (_env_slope(p1, cfg) + _env_slope(p2, cfg)) * 0.5
    return EstimateReport(beta_hat=beta.value, method="ols_separate",
                          diagnostics={"se": beta.se})


def ols_combined(data: PairLike, config: Optional[EstimatorConfig] = None) -> EstimateReport:
    """Single regression slope on the pooled sample."""
    cfg = config or DEFAULT_CONFIG
    p1, p2 = _as_pairs(data, cfg)
    w1 = getattr(p1, "n", None) or 1
    w2 = getattr(p2, "n", None) or 1
    num = w1 * p1.moment(1, 1) + w2 * p2.moment(1, 1)
    den = w1 * p1.moment(2, 0) + w2 * p2.moment(2, 0)
    if not is_nonzero(den, cfg.z, cfg.abs_floor):
        raise ZeroVarianceError("pooled treatment variance is zero")
    beta = num / den
    return EstimateReport(beta_hat=beta.value, method="ols_combined",
                          diagnostics={"se": beta.se})


def residualize(
    t: np.ndarray, y: np.ndarray, covariates: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares residuals of t and y on observed covariates.

    Projects out the covariates (with an intercept) so the downstream
    two-variable estimators apply; with zero covariate columns the inputs
    pass through unchanged.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim == 1:
        cov = cov[:, None]
    if cov.shape[1] == 0:
        return t.copy(), y.copy()
    if cov.shape[0] != t.size or t.size != y.size:
        raise ValueError("covariate rows must match the sample count")
    design = np.column_stack([np.ones(t.size), cov])
    coef, _, rank, _ = np.linalg.lstsq(design, np.column_stack([t, y]), rcond=None)
    if rank < design.shape[1]:
        raise RankDeficiencyError(
            f"covariate matrix has rank {rank} < {design.shape[1]} columns"
        )
    fitted = design @ coef
    return t - fitted[:, 0], y - fitted[:, 1]


METHODS = {
    "alg1": estimate_eps_t,
    "alg2": estimate_eps_u,
    "alg3": estimate_gamma,
    "alg4": estimate_alpha,
    "ols_separate": ols_separate,
    "ols_combined": ols_combined,
}
