"""Large-deviation rate functions and Poisson tail bounds.

The centred increment of a walk has cumulant generating function

    Lambda(lam) = log(p e^lam + q e^-lam) + lam v,

and the associated rate function is I(x) = sup_{lam>0} (lam x - Lambda(lam)).
Both the closed-form evaluation (via the interior stationary point) and an
independent bracketed maximisation are provided; they must agree to 1e-10.
The Poissonised rate is I~(x) = 1 - exp(-I(x)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import WalkParams

#: Bracket and tolerance for the golden-section oracle.
LAMBDA_MAX = 50.0
GOLDEN_TOL = 1e-12


@dataclass(frozen=True)
class RateValue:
    """Value of I or I~ at ``x``.

    ``saturated`` marks the extended-real branch explicitly (I = +inf /
    I~ = 1 for x beyond the reachable speed v + 1) so no floating infinity
    ever enters downstream arithmetic.
    """

    x: float
    value: float
    maximizer: float | None
    saturated: bool = False


def lambda_fn(params: WalkParams, lam: float) -> float:
    """Cumulant generating function of the centred increment at ``lam``.

    Evaluated as logaddexp(log p + lam, log q - lam) + lam*v, stable for
    |lam| up to at least 50.
    """
    if not math.isfinite(lam):
        raise ValueError(f"lam must be finite, got {lam!r}")
    return float(np.logaddexp(math.log(params.p) + lam, math.log(params.q) - lam)) + lam * params.v


def rate_i(params: WalkParams, x: float) -> RateValue:
    """Rate function I(x) via the closed-form stationary point.

    For 0 < x < v+1 the supremum is attained at
    lam* = 0.5 * log(q (1+u) / (p (1-u))) with u = x - v.  At the lattice
    speed limit x = v+1 the supremum is the lam -> inf limit log(1/(1-q)),
    and beyond it I = +inf.  For x <= 0 every lam > 0 gives a negative
    objective, so the restricted supremum is 0 (approached as lam -> 0+).
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    v = params.v
    if x <= 0.0:
        return RateValue(x=x, value=0.0, maximizer=None)
    if x > v + 1.0:
        return RateValue(x=x, value=math.inf, maximizer=None, saturated=True)
    if x == v + 1.0:
        return RateValue(x=x, value=math.log(1.0 / params.p), maximizer=None)
    u = x - v
    lam_star = 0.5 * math.log(params.q * (1.0 + u) / (params.p * (1.0 - u)))
    return RateValue(x=x, value=lam_star * x - lambda_fn(params, lam_star), maximizer=lam_star)


def rate_i_numeric(params: WalkParams, x: float, lam_hi: float = LAMBDA_MAX,
                   tol: float = GOLDEN_TOL) -> RateValue:
    """Independent oracle for I(x): golden-section search over lam in (0, lam_hi].

    Kept deliberately free of the closed-form algebra so the two paths
    cross-validate each other.
    """
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x!r}")
    if x > params.v + 1.0:
        return RateValue(x=x, value=math.inf, maximizer=None, saturated=True)

    def objective(lam: float) -> float:
        return lam * x - lambda_fn(params, lam)

    gr = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 1e-15, lam_hi
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = objective(c), objective(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = objective(d)
    lam_hat = 0.5 * (a + b)
    val = max(objective(lam_hat), 0.0)
    return RateValue(x=x, value=val, maximizer=lam_hat)


def rate_i_tilde(params: WalkParams, x: float) -> RateValue:
    """Poissonised rate I~(x) = 1 - exp(-I(x)); saturates at exactly 1."""
    base = rate_i(params, x)
    if base.saturated:
        return RateValue(x=x, value=1.0, maximizer=None, saturated=True)
    return RateValue(x=x, value=1.0 - math.exp(-base.value), maximizer=base.maximizer)


# Poisson tails -----------------------------------------------------------------

def _poisson_logpmf(k: np.ndarray, t: float) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    return k * math.log(t) - t - np.array([math.lgamma(ki + 1.0) for ki in k])


def _logsumexp(logs: np.ndarray) -> float:
    m = float(np.max(logs))
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(logs - m))))


def poisson_tail_upper(t: float, chi: float) -> tuple[float, float]:
    """Exact P(N_t >= e*t + chi) and the Chernoff bound exp(-t - chi).

    The exact tail is a direct log-space sum of the pmf from the threshold
    upward; terms decay at least geometrically with ratio 1/e there, so the
    summation window is short.  Returns (exact, bound); exact <= bound holds
    for every t > 0, chi >= 0.
    """
    if not (t > 0.0):
        raise ValueError(f"t must be positive, got {t}")
    if chi < 0.0:
        raise ValueError(f"chi must be >= 0, got {chi}")
    bound = math.exp(-t - chi)
    k0 = math.ceil(math.e * t + chi)
    k_hi = max(k0 + 64, math.ceil(t + 20.0 * math.sqrt(t)))
    ks = np.arange(k0, k_hi + 1)
    exact = math.exp(_logsumexp(_poisson_logpmf(ks, t)))
    return exact, bound


def poisson_tail_lower(t: float, chi: float) -> tuple[float, float]:
    """Exact P(N_t <= t/e - chi) and the bound exp(-(1 - 2/e) t - chi).

    The threshold floor(t/e - chi) may be negative, in which case the event
    is empty and the exact tail is 0 (the bound stays positive).
    """
    if not (t > 0.0):
        raise ValueError(f"t must be positive, got {t}")
    if chi < 0.0:
        raise ValueError(f"chi must be >= 0, got {chi}")
    bound = math.exp(-(1.0 - 2.0 / math.e) * t - chi)
    k1 = math.floor(t / math.e - chi)
    if k1 < 0:
        return 0.0, bound
    ks = np.arange(0, k1 + 1)
    exact = math.exp(_logsumexp(_poisson_logpmf(ks, t)))
    return exact, bound


# Compound displacement law ------------------------------------------------------

def walk_increment_pmf(delta: float, p: float) -> tuple[np.ndarray, int]:
    """pmf of the net displacement of one walk over a time window ``delta``.

    The walk jumps at unit rate, +1 with probability p else -1; thinning the
    clock splits the displacement into independent up and down Poisson
    counts, so it is Skellam(p*delta, q*delta) distributed.  Returns
    (pmf, kmax) where pmf[i] = P(displacement = i - kmax) and the support is
    wide enough that the clipped mass is below 1e-18.
    """
    if delta < 0.0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    from scipy.special import ive

    q = 1.0 - p
    kmax = max(4, math.ceil(delta + 12.0 * math.sqrt(delta) + 12.0))
    if delta == 0.0:
        out = np.zeros(2 * kmax + 1)
        out[kmax] = 1.0
        return out, kmax
    mu_up, mu_down = p * delta, q * delta
    z = 2.0 * math.sqrt(mu_up * mu_down)
    support = np.arange(-kmax, kmax + 1)
    # Skellam(mu_up, mu_down): exp(z - mu1 - mu2) <= 1, so the scaled Bessel
    # form is overflow-free.
    pmf = (np.power(mu_up / mu_down, support / 2.0)
           * ive(np.abs(support), z) * math.exp(z - mu_up - mu_down))
    return pmf, kmax


def displacement_chernoff_bound(m: float, t: float, params: WalkParams) -> float:
    """Rigorous upper bound on P(walk displacement over [0, t] >= m), m > 0.

    Chernoff with the compound-Poisson mgf E[exp(lam D)] = exp(t (phi - 1)),
    phi = p e^lam + q e^-lam, optimised in closed form.  Used to screen
    astronomically rare exceedance events before falling back to exact
    machinery.
    """
    if m <= 0.0:
        return 1.0
    a = m / t
    y = (a + math.sqrt(a * a + 4.0 * params.p * params.q)) / (2.0 * params.p)
    lam = math.log(y)
    phi = params.p * y + params.q / y
    return math.exp(min(t * (phi - 1.0) - lam * m, 0.0))
