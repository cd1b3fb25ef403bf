"""Model zoo: finite-state HMM and four continuous-state models.

Every model exposes the same surface: a transition density q(x, x') with
respect to the state dominating measure, a strictly positive likelihood
g(x, y) with respect to the observation dominating measure, a drift
function V >= 1, exact samplers, and the ratio QV/V used by the bound
machinery.

Dominating measures: Lebesgue for all continuous transitions; Lebesgue for
the observations of the linear-Gaussian, nonlinear and stochastic
volatility models; delta_0 + Lebesgue for the censored (tobit)
observations, so g(x, 0) is a Gaussian tail probability while g(x, y > 0)
is a density.  Both feed the filter identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import log_ndtr, ndtr

from .grids import GridSpec, InitialDistribution
from .rng import substream

DOMAIN_SD_MULTIPLE = 8.0


class DomainError(ValueError):
    """Input outside the declared state or observation domain."""


class CoverageError(RuntimeError):
    """Quadrature grid fails to cover the effective support of Q(x, .)."""


@dataclass(frozen=True)
class DriftFunction:
    """Drift function V: either V == 1 or V(x) = exp(c|x|) with c > 0."""

    form: str = "one"
    c: float = 0.0

    def __post_init__(self):
        if self.form not in ("one", "exp_abs"):
            raise ValueError(f"unknown drift form {self.form!r}")
        if self.form == "exp_abs" and self.c <= 0:
            raise ValueError("exp_abs drift needs c > 0")

    @classmethod
    def one(cls):
        return cls("one")

    @classmethod
    def exp_abs(cls, c):
        return cls("exp_abs", c=float(c))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "one":
            return np.ones_like(x)
        return np.exp(self.c * np.abs(x))

    def log(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "one":
            return np.zeros_like(x)
        return self.c * np.abs(x)


@dataclass
class Trajectory:
    """A simulated path (or observation-only record) of the generating model."""

    obs: np.ndarray
    hidden: np.ndarray | None = None
    seed: int | None = None
    replication: int = 0
    generator: str = ""

    def __post_init__(self):
        self.obs = np.asarray(self.obs)
        if self.hidden is not None:
            self.hidden = np.asarray(self.hidden)
            if len(self.hidden) != len(self.obs):
                raise ValueError("hidden and observed paths must have equal length")


def _folded_exp_moment(mean, sd, c):
    """E[exp(c |Z|)] for Z ~ N(mean, sd^2), in closed form."""
    mean = np.asarray(mean, dtype=float)
    half = c * c * sd * sd / 2.0
    pos = np.exp(c * mean + half) * ndtr(mean / sd + c * sd)
    neg = np.exp(-c * mean + half) * ndtr(-mean / sd + c * sd)
    return pos + neg


class GaussianStateModel:
    """Base for models whose hidden chain has a Gaussian transition kernel.

    Subclasses define the conditional mean of the next state and the
    observation channel; the state noise is additive N(0, state_sd^2).
    """

    kind = "abstract"

    def __init__(self, state_sd, drift, domain_halfwidth):
        if state_sd <= 0:
            raise ValueError("state noise s.d. must be positive")
        self.state_sd = float(state_sd)
        self.drift = drift if drift is not None else DriftFunction.one()
        self.domain = (-float(domain_halfwidth), float(domain_halfwidth))

    # -- transition ---------------------------------------------------------

    def state_mean(self, x):
        raise NotImplementedError

    def _trans_logpdf(self, x, x_next):
        x = np.asarray(x, dtype=float)
        x_next = np.asarray(x_next, dtype=float)
        return stats.norm.logpdf(x_next, loc=self.state_mean(x), scale=self.state_sd)

    def _check_state(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi):
            raise DomainError(f"state outside the truncation domain [{lo}, {hi}]")
        return x

    def transition_density(self, x, x_next):
        self._check_state(x)
        self._check_state(x_next)
        return np.exp(self._trans_logpdf(x, x_next))

    # -- observation --------------------------------------------------------

    def _check_obs(self, y):
        return np.asarray(y, dtype=float)

    def _obs_logpdf(self, x, y):
        raise NotImplementedError

    def log_likelihood(self, x, y):
        self._check_state(x)
        return self._obs_logpdf(np.asarray(x, dtype=float), self._check_obs(y))

    def likelihood(self, x, y):
        return np.exp(self.log_likelihood(x, y))

    # -- sampling -----------------------------------------------------------

    def sample_transition(self, x, rng):
        return self.state_mean(x) + self.state_sd * rng.standard_normal()

    def sample_observation(self, x, rng):
        raise NotImplementedError

    def sample_step(self, x, rng):
        x_next = self.sample_transition(x, rng)
        return x_next, self.sample_observation(x_next, rng)

    # -- drift --------------------------------------------------------------

    def drift_value(self, x):
        return self.drift(x)

    def qv_ratio_exact(self, x):
        """QV(x)/V(x) in closed form (Gaussian folded exponential moment)."""
        x = np.asarray(x, dtype=float)
        if self.drift.form == "one":
            return np.ones_like(x)
        c = self.drift.c
        qv = _folded_exp_moment(self.state_mean(x), self.state_sd, c)
        return qv * np.exp(-c * np.abs(x))

    def qv_ratio(self, x, quad: GridSpec | None = None, coverage_tol=1e-6):
        """QV(x)/V(x) by midpoint quadrature; checks grid coverage."""
        x = float(x)
        if quad is None:
            r = 10.0 * self.state_sd
            mu = float(self.state_mean(x))
            quad = GridSpec(mu - r, mu + r, 2001)
        z = quad.centers
        q = np.exp(self._trans_logpdf(x, z)) * quad.delta
        mass = q.sum()
        if abs(mass - 1.0) > coverage_tol:
            raise CoverageError(
                f"quadrature grid captures mass {mass:.8f} of Q({x}, .); widen the grid"
            )
        return float(q @ self.drift(z)) / float(self.drift(x))


class LGSSM(GaussianStateModel):
    """Linear Gaussian state-space model: x' = phi x + sigma z, y = h0 x + beta e."""

    kind = "lgssm"

    def __init__(self, phi, sigma, beta, h0=1.0, drift=None, domain_halfwidth=None):
        if not abs(phi) < 1:
            raise ValueError("autoregression needs |phi| < 1")
        if beta <= 0:
            raise ValueError("observation noise s.d. must be positive")
        self.phi = float(phi)
        self.beta = float(beta)
        self.h0 = float(h0)
        if domain_halfwidth is None:
            domain_halfwidth = DOMAIN_SD_MULTIPLE * sigma / np.sqrt(1 - phi * phi)
        super().__init__(sigma, drift, domain_halfwidth)

    def state_mean(self, x):
        return self.phi * np.asarray(x, dtype=float)

    def _obs_logpdf(self, x, y):
        return stats.norm.logpdf(y, loc=self.h0 * x, scale=self.beta)

    def sample_observation(self, x, rng):
        return self.h0 * x + self.beta * rng.standard_normal()


class TobitModel(GaussianStateModel):
    """Dynamic tobit: AR(1) state, observation max(x + beta e, 0).

    Observation dominating measure is delta_0 + Lebesgue: the likelihood at
    y = 0 is the censoring probability P(x + beta e <= 0), at y > 0 a
    Gaussian density.
    """

    kind = "tobit"

    def __init__(self, phi, sigma, beta, drift=None, domain_halfwidth=None):
        if not abs(phi) < 1:
            raise ValueError("autoregression needs |phi| < 1")
        if beta <= 0:
            raise ValueError("observation noise s.d. must be positive")
        self.phi = float(phi)
        self.beta = float(beta)
        if domain_halfwidth is None:
            domain_halfwidth = DOMAIN_SD_MULTIPLE * sigma / np.sqrt(1 - phi * phi)
        super().__init__(sigma, drift, domain_halfwidth)

    def state_mean(self, x):
        return self.phi * np.asarray(x, dtype=float)

    def _check_obs(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("tobit observations are nonnegative")
        return y

    def _obs_logpdf(self, x, y):
        x, y = np.broadcast_arrays(x, y)
        censored = log_ndtr(-x / self.beta)
        density = stats.norm.logpdf(y, loc=x, scale=self.beta)
        return np.where(y == 0, censored, density)

    def sample_observation(self, x, rng):
        return max(x + self.beta * rng.standard_normal(), 0.0)


class NLSSM(GaussianStateModel):
    """1-d nonlinear Gaussian model x' = x + b(x) + sigma0 z, y = h(x) + beta e.

    Catalog of drifts b: ``linear_shrink`` gives b(x) = -delta x (contracts for
    delta in (0, 2)); ``tanh`` gives b(x) = -delta x + kappa tanh(x) (bounded
    perturbation of the shrink).  Observation maps: identity or affine
    h(x) = a x + b_off.  Both catalogs keep |x + b(x)| - |x| -> -infinity.
    """

    kind = "nlssm"

    def __init__(self, drift_form, delta, sigma0, beta, kappa=0.0,
                 obs_form="identity", obs_a=1.0, obs_b=0.0,
                 drift=None, domain_halfwidth=None):
        if drift_form not in ("linear_shrink", "tanh"):
            raise ValueError(f"unknown state drift form {drift_form!r}")
        if not 0 < delta < 2:
            raise ValueError("linear shrink needs delta in (0, 2)")
        if obs_form not in ("identity", "affine"):
            raise ValueError(f"unknown observation map {obs_form!r}")
        if beta <= 0:
            raise ValueError("observation noise s.d. must be positive")
        self.drift_form = drift_form
        self.delta = float(delta)
        self.kappa = float(kappa)
        self.beta = float(beta)
        self.obs_form = obs_form
        self.obs_a = float(obs_a)
        self.obs_b = float(obs_b)
        if domain_halfwidth is None:
            phi_eff = 1 - delta
            domain_halfwidth = DOMAIN_SD_MULTIPLE * sigma0 / np.sqrt(1 - phi_eff * phi_eff)
        super().__init__(sigma0, drift, domain_halfwidth)

    def state_mean(self, x):
        x = np.asarray(x, dtype=float)
        mean = (1 - self.delta) * x
        if self.drift_form == "tanh":
            mean = mean + self.kappa * np.tanh(x)
        return mean

    def obs_map(self, x):
        x = np.asarray(x, dtype=float)
        if self.obs_form == "identity":
            return x
        return self.obs_a * x + self.obs_b

    def _obs_logpdf(self, x, y):
        return stats.norm.logpdf(y, loc=self.obs_map(x), scale=self.beta)

    def sample_observation(self, x, rng):
        return float(self.obs_map(x)) + self.beta * rng.standard_normal()


class StochVolModel(GaussianStateModel):
    """Canonical stochastic volatility model: y = beta exp(x/2) e."""

    kind = "stochvol"

    def __init__(self, phi, sigma, beta, drift=None, domain_halfwidth=None):
        if not abs(phi) < 1:
            raise ValueError("autoregression needs |phi| < 1")
        if beta <= 0:
            raise ValueError("observation scale must be positive")
        self.phi = float(phi)
        self.beta = float(beta)
        if domain_halfwidth is None:
            domain_halfwidth = DOMAIN_SD_MULTIPLE * sigma / np.sqrt(1 - phi * phi)
        super().__init__(sigma, drift, domain_halfwidth)

    def state_mean(self, x):
        return self.phi * np.asarray(x, dtype=float)

    def _obs_logpdf(self, x, y):
        x, y = np.broadcast_arrays(x, y)
        b2 = self.beta * self.beta
        return -0.5 * np.log(2 * np.pi * b2) - y * y * np.exp(-x) / (2 * b2) - x / 2

    def sample_observation(self, x, rng):
        return self.beta * np.exp(x / 2) * rng.standard_normal()


class FiniteStateModel:
    """Finite-state HMM over states {0..m-1} and symbols {0..K-1}.

    The transition matrix is exactly row-stochastic; emission probabilities
    are strictly positive on the declared observation alphabet.
    """

    kind = "finite"

    def __init__(self, transition, emission, drift_values=None):
        P = np.asarray(transition, dtype=float)
        E = np.asarray(emission, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 2:
            raise ValueError("transition must be a square matrix with m >= 2")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must be nonnegative and sum to 1 within 1e-12")
        if E.ndim != 2 or E.shape[0] != P.shape[0]:
            raise ValueError("emission must have one row per state")
        if np.any(E <= 0):
            raise ValueError("emission probabilities must be strictly positive")
        self.transition = P
        self.emission = E
        self.m = P.shape[0]
        self.n_symbols = E.shape[1]
        if drift_values is None:
            drift_values = np.ones(self.m)
        self.drift_values = np.asarray(drift_values, dtype=float)
        if np.any(self.drift_values < 1):
            raise ValueError("drift values must be >= 1")
        self.drift = DriftFunction.one()

    def _check_state(self, x):
        x = int(x)
        if not 0 <= x < self.m:
            raise DomainError(f"state {x} outside {{0..{self.m - 1}}}")
        return x

    def _check_obs(self, y):
        y = int(y)
        if not 0 <= y < self.n_symbols:
            raise DomainError(f"symbol {y} outside {{0..{self.n_symbols - 1}}}")
        return y

    def transition_density(self, x, x_next):
        return self.transition[self._check_state(x), self._check_state(x_next)]

    def likelihood(self, x, y):
        return self.emission[self._check_state(x), self._check_obs(y)]

    def log_likelihood(self, x, y):
        return np.log(self.likelihood(x, y))

    def likelihood_vector(self, y):
        return self.emission[:, self._check_obs(y)]

    def sample_transition(self, x, rng):
        return int(rng.choice(self.m, p=self.transition[self._check_state(x)]))

    def sample_observation(self, x, rng):
        return int(rng.choice(self.n_symbols, p=self.emission[self._check_state(x)]))

    def sample_step(self, x, rng):
        x_next = self.sample_transition(x, rng)
        return x_next, self.sample_observation(x_next, rng)

    def drift_value(self, x):
        return self.drift_values[self._check_state(x)]

    def qv_ratio(self, x, quad=None, coverage_tol=None):
        x = self._check_state(x)
        return float(self.transition[x] @ self.drift_values) / self.drift_values[x]


def simulate(model, n, init: InitialDistribution, seed, replication=0,
             generator_label=""):
    """Simulate a length-(n+1) path (x, y) of the generating model.

    The path is bit-reproducible from (seed, replication): step k draws from
    the stream keyed (seed, replication, k).
    """
    if n < 0:
        raise ValueError("horizon must be >= 0")
    rng0 = substream(seed, replication, 0)
    if isinstance(model, FiniteStateModel):
        x = int(init.sample(rng0)) if init.form != "finite" else init.sample(rng0)
    else:
        x = init.sample(rng0)
    hidden = [x]
    obs = [model.sample_observation(x, rng0)]
    for k in range(1, n + 1):
        rng = substream(seed, replication, k)
        x, y = model.sample_step(x, rng)
        hidden.append(x)
        obs.append(y)
    return Trajectory(obs=np.asarray(obs), hidden=np.asarray(hidden), seed=seed,
                      replication=replication, generator=generator_label or model.kind)
