"""Ground-truth linear SCM for two environments and its exact moment oracle.

The model in each environment is

    U = eps_u,   T = alpha * U + eps_t,   Y = beta * T + gamma * U + eps_y,

with independent zero-mean noises.  Both observables are linear forms over
the three noise atoms, so every mixed moment E[T^p Y^q] expands exactly via
the multinomial theorem and the noise families' closed-form moments.  That
expansion backs the population oracle that the estimation algorithms can be
evaluated on, and the observational-equivalence constructions that witness
the proven non-identifiable cases.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from typing import Union

from . import noise as noise_mod
from .empirical import MomentEstimate, PairMoments
from .noise import MomentOrderError, NoiseSpec

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml

DEFAULT_ORACLE_MAX_ORDER = 12


class ChangeKind(enum.Enum):
    """Which single mechanism differs between the two environments."""

    EPS_T = "eps_t"
    EPS_U = "eps_u"
    GAMMA = "gamma"
    ALPHA = "alpha"
    EPS_Y = "eps_y"
    EPS_T_AND_EPS_U = "eps_t_and_eps_u"


_CHANGED_FIELDS = {
    ChangeKind.EPS_T: ("noise_t",),
    ChangeKind.EPS_U: ("noise_u",),
    ChangeKind.GAMMA: ("gamma",),
    ChangeKind.ALPHA: ("alpha",),
    ChangeKind.EPS_Y: ("noise_y",),
    ChangeKind.EPS_T_AND_EPS_U: ("noise_t", "noise_u"),
}

_SCM_FIELDS = ("alpha", "beta", "gamma", "noise_u", "noise_t", "noise_y")


@dataclass(frozen=True)
class ScmParams:
    """Coefficients and noise specs of one environment's linear SCM.

    alpha: effect U -> T; beta: effect T -> Y; gamma: effect U -> Y.
    A confounded scenario has alpha != 0 and gamma != 0; degenerate values
    are permitted for test fixtures.
    """

    alpha: float
    beta: float
    gamma: float
    noise_u: NoiseSpec
    noise_t: NoiseSpec
    noise_y: NoiseSpec


@dataclass(frozen=True)
class ScenarioSpec:
    """Two environments plus the tag of the mechanism that changed.

    Fields *not* implied by ``change`` must be identical across the two
    environments (the treatment effect beta always is).  The changed
    field(s) may coincide in degenerate test fixtures.
    """

    env1: ScmParams
    env2: ScmParams
    change: ChangeKind

    def __post_init__(self):
        if self.env1.beta != self.env2.beta:
            raise ValueError("beta must be invariant across environments")
        changed = _CHANGED_FIELDS[self.change]
        for field in _SCM_FIELDS:
            if field in changed:
                continue
            if getattr(self.env1, field) != getattr(self.env2, field):
                raise ValueError(
                    f"{field} differs across environments but change={self.change.value}"
                )

    @property
    def beta(self) -> float:
        return self.env1.beta


# ----------------------------------------------------------------------
# exact population moments
# ----------------------------------------------------------------------

def _compositions(total: int, k: int):
    """All k-tuples of non-negative ints summing to total."""
    if k == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, k - 1):
            yield (first,) + rest


def _multinomial(total: int, parts: tuple[int, ...]) -> int:
    out = math.factorial(total)
    for p in parts:
        out //= math.factorial(p)
    return out


class ExactPairMoments(PairMoments):
    """Population moments of two linear forms over independent noise atoms.

    Implements the same interface as the sample-backed provider, with
    zero-se estimates, so every estimator runs unchanged on exact
    population statistics.
    """

    def __init__(
        self,
        coeffs: tuple[tuple[float, ...], tuple[float, ...]],
        atoms: tuple[NoiseSpec, ...],
        *,
        max_order: int = DEFAULT_ORACLE_MAX_ORDER,
    ):
        row1, row2 = coeffs
        if len(row1) != len(atoms) or len(row2) != len(atoms):
            raise ValueError("coefficient rows must match the number of atoms")
        self._c1 = tuple(float(c) for c in row1)
        self._c2 = tuple(float(c) for c in row2)
        self.atoms = tuple(atoms)
        self.max_order = int(max_order)
        self._cache: dict[tuple[int, int], MomentEstimate] = {}

    @classmethod
    def from_scm(cls, scm: ScmParams, *, max_order: int = DEFAULT_ORACLE_MAX_ORDER):
        """(T, Y) as linear forms over (eps_u, eps_t, eps_y)."""
        t_row = (scm.alpha, 1.0, 0.0)
        y_row = (scm.alpha * scm.beta + scm.gamma, scm.beta, 1.0)
        return cls((t_row, y_row), (scm.noise_u, scm.noise_t, scm.noise_y), max_order=max_order)

    def moment(self, p: int, q: int) -> MomentEstimate:
        key = (int(p), int(q))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p, q = key
        if p < 0 or q < 0:
            raise ValueError("powers must be non-negative")
        if p + q > self.max_order:
            raise MomentOrderError(f"moment order {p + q} exceeds cap {self.max_order}")
        k = len(self.atoms)
        total = 0.0
        for iparts in _compositions(p, k):
            c1 = _multinomial(p, iparts)
            w1 = 1.0
            for c, i in zip(self._c1, iparts):
                if i:
                    if c == 0.0:
                        w1 = 0.0
                        break
                    w1 *= c**i
            if w1 == 0.0:
                continue
            for jparts in _compositions(q, k):
                c2 = _multinomial(q, jparts)
                w2 = 1.0
                for c, j in zip(self._c2, jparts):
                    if j:
                        if c == 0.0:
                            w2 = 0.0
                            break
                        w2 *= c**j
                if w2 == 0.0:
                    continue
                mom = 1.0
                for atom, i, j in zip(self.atoms, iparts, jparts):
                    if i + j:
                        mom *= noise_mod.raw_moment(atom, i + j, max_order=self.max_order)
                        if mom == 0.0:
                            break
                total += c1 * c2 * w1 * w2 * mom
        est = MomentEstimate(total)
        self._cache[key] = est
        return est

    def transform(self, a: float, b: float, c: float, d: float) -> "ExactPairMoments":
        row1 = tuple(a * u + b * v for u, v in zip(self._c1, self._c2))
        row2 = tuple(c * u + d * v for u, v in zip(self._c1, self._c2))
        return ExactPairMoments((row1, row2), self.atoms, max_order=self.max_order)


def population_moment(
    scm: ScmParams, p: int, q: int, *, max_order: int = DEFAULT_ORACLE_MAX_ORDER
) -> float:
    """Exact E[T^p Y^q] under the structural model."""
    return ExactPairMoments.from_scm(scm, max_order=max_order).moment(p, q).value


def population_pairs(
    scenario: ScenarioSpec, *, max_order: int = DEFAULT_ORACLE_MAX_ORDER
) -> tuple[ExactPairMoments, ExactPairMoments]:
    """Population-oracle moment providers for both environments."""
    return (
        ExactPairMoments.from_scm(scenario.env1, max_order=max_order),
        ExactPairMoments.from_scm(scenario.env2, max_order=max_order),
    )


# ----------------------------------------------------------------------
# reparametrizations and counterexamples
# ----------------------------------------------------------------------

def rescale_alpha_to_one(scm: ScmParams) -> ScmParams:
    """Observationally equivalent SCM with the U -> T coefficient set to 1.

    Folds alpha into the latent noise: eps_u' = alpha * eps_u and
    gamma' = gamma / alpha.  Every population moment is preserved.
    """
    if scm.alpha == 0.0:
        raise ValueError("cannot rescale: alpha is zero")
    return ScmParams(
        alpha=1.0,
        beta=scm.beta,
        gamma=scm.gamma / scm.alpha,
        noise_u=scm.noise_u.scaled(scm.alpha),
        noise_t=scm.noise_t,
        noise_y=scm.noise_y,
    )


def _tilde_env(env: ScmParams) -> ScmParams:
    # swap roles of the latent and treatment noises:
    #   eps_u~ = eps_t, eps_t~ = alpha * eps_u, alpha~ = 1,
    #   gamma~ = -gamma/alpha, beta~ = beta + gamma/alpha
    if env.alpha == 0.0:
        raise ValueError("construction needs alpha != 0")
    return ScmParams(
        alpha=1.0,
        beta=env.beta + env.gamma / env.alpha,
        gamma=-env.gamma / env.alpha,
        noise_u=env.noise_t,
        noise_t=env.noise_u.scaled(env.alpha),
        noise_y=env.noise_y,
    )


def construct_counterexample(scenario: ScenarioSpec) -> ScenarioSpec:
    """Observationally equivalent scenario with a different treatment effect.

    For a pair of environments where both eps_t and eps_u changed, returns
    the alternative models that induce the same per-environment
    distributions while the effect becomes beta + gamma/alpha -- the
    witness that this case is not identifiable.
    """
    if scenario.change is not ChangeKind.EPS_T_AND_EPS_U:
        raise ValueError("counterexample requires change == eps_t_and_eps_u")
    return ScenarioSpec(
        env1=_tilde_env(scenario.env1),
        env2=_tilde_env(scenario.env2),
        change=ChangeKind.EPS_T_AND_EPS_U,
    )


def construct_epsy_counterexample(scenario: ScenarioSpec) -> ScenarioSpec:
    """Same substitution for the outcome-noise-change case.

    Here eps_u and eps_t are shared across environments and only eps_y
    varies, so the swapped models again differ only in eps_y while
    matching both observational distributions; beta moves by gamma/alpha.
    """
    if scenario.change is not ChangeKind.EPS_Y:
        raise ValueError("counterexample requires change == eps_y")
    return ScenarioSpec(
        env1=_tilde_env(scenario.env1),
        env2=_tilde_env(scenario.env2),
        change=ChangeKind.EPS_Y,
    )


# ----------------------------------------------------------------------
# TOML serialization
# ----------------------------------------------------------------------

def _noise_to_toml(prefix: str, spec: NoiseSpec, out: io.StringIO) -> None:
    out.write(f"[{prefix}]\n")
    out.write(f'family = "{spec.family}"\n')
    out.write("params = [" + ", ".join(repr(p) for p in spec.params) + "]\n")
    if spec.scale != 1.0:
        out.write(f"scale = {spec.scale!r}\n")


def scenario_to_toml(scenario: ScenarioSpec) -> str:
    out = io.StringIO()
    out.write(f'change = "{scenario.change.value}"\n')
    for name, env in (("env1", scenario.env1), ("env2", scenario.env2)):
        out.write(f"\n[{name}]\n")
        out.write(f"alpha = {env.alpha!r}\n")
        out.write(f"beta = {env.beta!r}\n")
        out.write(f"gamma = {env.gamma!r}\n")
        for noise_key in ("noise_u", "noise_t", "noise_y"):
            _noise_to_toml(f"{name}.{noise_key}", getattr(env, noise_key), out)
    return out.getvalue()


def _noise_from_table(table: dict, where: str) -> NoiseSpec:
    try:
        return NoiseSpec(
            family=table["family"],
            params=tuple(table.get("params", ())),
            scale=float(table.get("scale", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad noise table at {where}: {exc}") from None


def _env_from_table(table: dict, where: str) -> ScmParams:
    try:
        return ScmParams(
            alpha=float(table["alpha"]),
            beta=float(table["beta"]),
            gamma=float(table["gamma"]),
            noise_u=_noise_from_table(table["noise_u"], f"{where}.noise_u"),
            noise_t=_noise_from_table(table["noise_t"], f"{where}.noise_t"),
            noise_y=_noise_from_table(table["noise_y"], f"{where}.noise_y"),
        )
    except KeyError as exc:
        raise ValueError(f"missing key {exc} in table {where}") from None


def scenario_from_toml(text_or_path: Union[str, "io.PathLike"], *, is_path: bool = False) -> ScenarioSpec:
    if is_path:
        with open(text_or_path, "rb") as f:
            data = _toml.load(f)
    else:
        data = _toml.loads(text_or_path)
    try:
        change = ChangeKind(data["change"])
    except (KeyError, ValueError):
        valid = ", ".join(k.value for k in ChangeKind)
        raise ValueError(f"scenario TOML needs change in {{{valid}}}") from None
    return ScenarioSpec(
        env1=_env_from_table(data["env1"], "env1"),
        env2=_env_from_table(data["env2"], "env2"),
        change=change,
    )


def scenario_from_toml_path(path) -> ScenarioSpec:
    return scenario_from_toml(path, is_path=True)
