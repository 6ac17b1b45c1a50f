"""Model parameters and transition structure of the two-class PS queue.

The system serves two customer classes under processor sharing: patient
customers (count ``n``) arrive at rate ``alpha`` and require exponential
service at rate ``mu``; impatient customers (count ``m``) arrive at rate
``beta``, require exponential service at rate ``nu`` and independently
abandon at rate ``theta`` each.  With ``k = n + m`` customers present each
receives a ``1/k`` share of the unit-capacity server, so the per-state
transition rates are

    (n, m) -> (n+1, m)   alpha
    (n, m) -> (n, m+1)   beta
    (n, m) -> (n-1, m)   mu * n / (n + m)            (n > 0)
    (n, m) -> (n, m-1)   nu * m / (n + m) + theta*m  (m > 0)

with the convention 0/0 = 0 at the empty state.  The chain is positive
recurrent iff the patient load rho = alpha/mu is < 1; the impatient class
never compromises stability because abandonment drains it at any load.
"""

from functools import lru_cache
from dataclasses import dataclass
import json
import math
from pathlib import Path
from typing import NamedTuple


class StabilityError(ValueError):
    """Raised when an operation requires rho = alpha/mu < 1 and it fails."""


class State(NamedTuple):
    """Lattice point: ``n`` patient and ``m`` impatient customers present."""

    n: int
    m: int


@dataclass(frozen=True)
class ModelParams:
    """The five rate parameters of the queue.

    ``mu`` and ``theta`` must be strictly positive (they appear as divisors
    in the derived constants).  ``alpha``, ``beta`` and ``nu`` may be zero,
    which yields the degenerate reduction cases (no patient class, no
    impatient arrivals, abandonment-only departures).
    """

    alpha: float
    beta: float
    mu: float
    nu: float
    theta: float

    def __post_init__(self):
        for name in ("alpha", "beta", "mu", "nu", "theta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        if self.alpha < 0 or self.beta < 0 or self.nu < 0:
            raise ValueError("rates must be non-negative")
        if self.mu <= 0:
            raise ValueError(f"mu must be strictly positive, got {self.mu}")
        if self.theta <= 0:
            raise ValueError(f"theta must be strictly positive, got {self.theta}")

    @property
    def derived(self) -> "DerivedConstants":
        return derive_constants(self)


@dataclass(frozen=True)
class DerivedConstants:
    """Dimensionless constants derived from :class:`ModelParams`.

    Attributes
    ----------
    A : float
        Scale of the impatient class, beta/theta.  Its stationary count
        concentrates near A in heavy traffic.
    rho : float
        Patient load alpha/mu; the stability condition is rho < 1.
    x_star : float
        Fluid fixed point of the scaled patient count, rho/(1-rho)
        (``inf`` when rho >= 1).
    y_star : float
        Fluid fixed point of the scaled impatient count; always 1.
    c : float
        Service-to-abandonment ratio nu/theta of the impatient class.
    """

    A: float
    rho: float
    x_star: float
    y_star: float
    c: float

    @property
    def stable(self) -> bool:
        return self.rho < 1.0


@lru_cache(maxsize=None)
def derive_constants(params: ModelParams) -> DerivedConstants:
    """Compute the derived constants (exact ratios) for ``params``."""
    rho = params.alpha / params.mu
    x_star = rho / (1.0 - rho) if rho < 1.0 else math.inf
    return DerivedConstants(
        A=params.beta / params.theta,
        rho=rho,
        x_star=x_star,
        y_star=1.0,
        c=params.nu / params.theta,
    )


def service_rate_patient(n, m, params: ModelParams):
    """Departure rate of the patient class at (n, m): mu*n/(n+m), 0/0 = 0.

    Accepts scalars or numpy arrays (the exact engine reuses this
    vectorized; keeping one definition guarantees the generator and the
    per-state transition list never drift apart).
    """
    tot = n + m
    if hasattr(tot, "shape"):  # array path
        import numpy as np

        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, params.mu * n / np.maximum(tot, 1), 0.0)
    return params.mu * n / tot if tot > 0 else 0.0


def departure_rate_impatient(n, m, params: ModelParams):
    """Departure rate of the impatient class: nu*m/(n+m) + theta*m, 0/0 = 0."""
    tot = n + m
    if hasattr(tot, "shape"):
        import numpy as np

        with np.errstate(invalid="ignore", divide="ignore"):
            srv = np.where(tot > 0, params.nu * m / np.maximum(tot, 1), 0.0)
        return srv + params.theta * m
    srv = params.nu * m / tot if tot > 0 else 0.0
    return srv + params.theta * m


def transition_rates(s: State, params: ModelParams) -> list[tuple[State, float]]:
    """All transitions out of state ``s`` with their rates.

    Zero-rate transitions are omitted, so at the empty state only the two
    arrival transitions appear.
    """
    n, m = s
    if n < 0 or m < 0:
        raise ValueError(f"state components must be non-negative, got {s}")
    out: list[tuple[State, float]] = []
    if params.alpha > 0:
        out.append((State(n + 1, m), params.alpha))
    if params.beta > 0:
        out.append((State(n, m + 1), params.beta))
    if n > 0:
        out.append((State(n - 1, m), service_rate_patient(n, m, params)))
    if m > 0:
        rate = departure_rate_impatient(n, m, params)
        if rate > 0:
            out.append((State(n, m - 1), rate))
    return out


def total_outflow(s: State, params: ModelParams) -> float:
    return sum(rate for _, rate in transition_rates(s, params))


# -- configuration input -----------------------------------------------------

_PARAM_KEYS = ("alpha", "beta", "mu", "nu", "theta")


def load_config(path) -> dict[str, float]:
    """Read a flat key-value configuration file.

    Two formats are accepted: JSON objects, and plain text with one
    ``key = value`` (or ``key value``) pair per line; ``#`` starts a
    comment.  All values are returned as floats.
    """
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
        return {str(k): float(v) for k, v in raw.items()}
    out: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        elif ":" in line:
            key, _, value = line.partition(":")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: cannot parse {line!r}")
            key, value = parts
        out[key.strip()] = float(value.strip())
    return out


def params_from_dict(d: dict) -> ModelParams:
    """Build :class:`ModelParams` from a config dict with the five rate keys."""
    missing = [k for k in _PARAM_KEYS if k not in d]
    if missing:
        raise KeyError(f"missing parameter keys: {', '.join(missing)}")
    return ModelParams(*(float(d[k]) for k in _PARAM_KEYS))


def params_from_scale(A: float, rho: float, mu: float = 1.0, nu: float = 1.0,
                      theta: float = 1.0) -> ModelParams:
    """Convenience constructor from the dimensionless pair (A, rho).

    Sets alpha = rho*mu and beta = A*theta, so the derived constants come
    out to exactly the requested A and rho.
    """
    return ModelParams(alpha=rho * mu, beta=A * theta, mu=mu, nu=nu, theta=theta)
