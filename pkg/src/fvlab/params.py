"""Model parameters, experiment constants and the randomness contract.

Everything downstream (simulators, estimators, the CLI) builds on the three
value types defined here: ``WalkParams`` (the jump rates), ``Schedule`` (the
derived time horizon, length threshold and decay rate of an experiment) and
``RngStream`` (a reproducible, splittable source of randomness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

E = math.e
#: Constant first component of the decay rate: 1 - 2/e.
KAPPA_CAP = 1.0 - 2.0 / math.e


@dataclass(frozen=True)
class WalkParams:
    """Jump rates of a single walk: rate ``p`` up, rate ``q = 1 - p`` down.

    The walk drifts toward the origin at speed ``v = q - p > 0``.  Use
    :func:`validate_params` instead of constructing directly.
    """

    p: float
    q: float
    v: float


def validate_params(p: float) -> WalkParams:
    """Build :class:`WalkParams` from the up-rate ``p``.

    Requires ``0 < p < 1/2`` so that the drift ``v = q - p`` is strictly
    positive.  ``p + q = 1`` and ``v = q - p`` hold exactly as floating-point
    identities.
    """
    if not math.isfinite(p):
        raise ValueError(f"p must be finite, got {p!r}")
    if p <= 0.0:
        raise ValueError(f"p must be positive, got {p}")
    if p >= 0.5:
        raise ValueError(f"q > p violated: need p < 1/2 for a drift toward the origin, got p={p}")
    q = 1.0 - p
    return WalkParams(p=p, q=q, v=q - p)


@dataclass
class Configuration:
    """Positions of the ``n`` interacting walks; every position is >= 1."""

    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        if self.positions.ndim != 1:
            raise ValueError("positions must be a 1-d integer array")
        if self.n < 2:
            raise ValueError(f"n_walks >= 2 required, got {self.n}")
        if (self.positions < 1).any():
            raise ValueError("all positions must be >= 1")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def copy(self) -> "Configuration":
        return Configuration(self.positions.copy())

    @property
    def max(self) -> int:
        return int(self.positions.max())


def all_at(n_walks: int, position: int = 1) -> Configuration:
    """Configuration with every walk at the same site (the default start)."""
    return Configuration(np.full(n_walks, position, dtype=np.int64))


@dataclass(frozen=True)
class Schedule:
    """Experiment constants derived from the walk parameters and ``N``.

    ``t_horizon = big_a * log(n_walks)``, ``l_threshold = e * t_horizon``,
    ``kappa = min(1 - 2/e, I~(v/2) - 1/big_a, p - 1/big_a)`` and
    ``delta0 = kappa / (4 e)``, the largest admissible tilt for the drift
    checks.
    """

    n_walks: int
    big_a: float
    t_horizon: float
    l_threshold: float
    kappa: float
    delta0: float


def _kappa_terms(params: WalkParams, big_a: float) -> tuple[float, float, float]:
    from .rates import rate_i_tilde  # local import: rates depends on params

    it_half = rate_i_tilde(params, params.v / 2.0).value
    return (KAPPA_CAP, it_half - 1.0 / big_a, params.p - 1.0 / big_a)


def schedule_from_big_a(params: WalkParams, n_walks: int, big_a: float) -> Schedule:
    """Schedule at an explicitly chosen ``big_a`` (must keep kappa > 0)."""
    if n_walks < 2:
        raise ValueError(f"n_walks >= 2 required, got {n_walks}")
    if not (big_a > 0.0 and math.isfinite(big_a)):
        raise ValueError(f"big_a must be positive and finite, got {big_a}")
    kappa = min(_kappa_terms(params, big_a))
    if kappa <= 0.0:
        raise ValueError(f"big_a={big_a} gives kappa={kappa:.6g} <= 0; raise big_a")
    t_horizon = big_a * math.log(n_walks)
    return Schedule(
        n_walks=n_walks,
        big_a=big_a,
        t_horizon=t_horizon,
        l_threshold=E * t_horizon,
        kappa=kappa,
        delta0=kappa / (4.0 * E),
    )


def make_schedule(params: WalkParams, n_walks: int, margin: float = 0.01) -> Schedule:
    """Smallest ``big_a`` for which every component of kappa exceeds ``margin``.

    Two of the three components grow with ``big_a``; the minimal admissible
    value is the larger of the two closed-form bounds, nudged up by one part
    in 1e9 so the inequalities hold strictly.  Deterministic in its inputs,
    and monotone: a larger margin never yields a smaller ``big_a``.
    """
    from .rates import rate_i_tilde

    if n_walks < 2:
        raise ValueError(f"n_walks >= 2 required, got {n_walks}")
    if not (margin > 0.0 and math.isfinite(margin)):
        raise ValueError(f"margin must be positive, got {margin}")
    if margin >= KAPPA_CAP:
        raise ValueError(f"margin {margin} >= 1 - 2/e = {KAPPA_CAP:.6f}; no schedule exists")
    it_half = rate_i_tilde(params, params.v / 2.0).value
    if margin >= it_half:
        raise ValueError(
            f"margin {margin} >= I~(v/2) = {it_half:.6g}; no schedule exists for p={params.p}"
        )
    if margin >= params.p:
        raise ValueError(f"margin {margin} >= 1 - q = {params.p}; no schedule exists")
    big_a = max(1.0 / (it_half - margin), 1.0 / (params.p - margin)) * (1.0 + 1e-9)
    return schedule_from_big_a(params, n_walks, big_a)


@dataclass(frozen=True)
class RngStream:
    """A named pseudo-random stream: (seed, stream_id) -> Philox generator.

    Identical (seed, stream_id) pairs reproduce identical draws bit for bit;
    distinct stream_ids give statistically independent streams, one per
    replica.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + offset)

    def substreams(self, count: int, base: int = 0) -> list["RngStream"]:
        return [self.substream(base + i) for i in range(count)]


# Flat key = value config files ------------------------------------------------

_CONFIG_KEYS = ("p", "n_walks", "big_a", "margin", "seed")
_INT_KEYS = {"n_walks", "seed"}


def write_config(path: str | Path, values: dict) -> None:
    """Write a flat ``key = value`` parameter file (known keys only)."""
    lines = []
    for key in _CONFIG_KEYS:
        if key in values and values[key] is not None:
            lines.append(f"{key} = {values[key]}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_config(path: str | Path) -> dict:
    """Parse a flat ``key = value`` parameter file written by :func:`write_config`."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = int(val) if key in _INT_KEYS else float(val)
    return out
