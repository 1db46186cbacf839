"""Correlated Gaussian noise over visited states, one table per action.

Each action keeps a state set sorted by the reward of the transition that
introduced the state, plus a dictionary from state vector to the noise value
drawn for it.  A new state is conditioned on its two reward-order neighbors
through an exponential kernel in state-space distance: nearby (in reward
rank) states receive correlated noise, and re-querying a state returns the
stored value unchanged, so the perturbation looks like one consistent random
function rather than fresh jitter per call.

The conditional mean and variance are evaluated in an overflow-safe form:
the dominant exponential is factored out of numerator and denominator, small
differences go through ``expm1``, and exponents are capped just below the
float64 overflow threshold so extreme kernel scales degrade to saturated
values instead of infinities.  The printed variance expression is negative
for interior points, so it is clamped to [0, 1]; at zero distance this
yields exact, deterministic interpolation of the neighbor's noise.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

# cap on exp() arguments: exp(700) ~ 1e304 leaves headroom for products
_EXP_MAX = 700.0


class DegenerateGeometryError(Exception):
    """The two conditioning neighbors coincide (zero span)."""


def psi(alpha: float, z: float, batch: int) -> float:
    """Inverse kernel length-scale: batch / (4 * alpha * (z + 1)).

    Grows with the mini-batch size and shrinks with the learning rate and
    balance factor; larger values decorrelate the noise faster in distance.
    """
    if batch <= 0:
        raise ValueError("batch must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if z < 0:
        raise ValueError("z must be nonnegative")
    return batch / (4.0 * alpha * (z + 1.0))


@dataclass
class FgpmConfig:
    """Noise level and the training constants the kernel scale derives from.

    ``exact_ou_variance`` swaps the printed conditional-variance formula for
    the exact two-point Ornstein-Uhlenbeck conditional, for sensitivity
    studies; the default follows the printed form plus clamping.
    """

    sigma: float
    alpha: float = 0.002
    z: float = 1.0
    batch: int = 64
    exact_ou_variance: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        self.psi  # validate alpha/z/batch eagerly

    @property
    def psi(self) -> float:
        return psi(self.alpha, self.z, self.batch)


def _exp(x: float) -> float:
    return math.exp(min(x, _EXP_MAX))


def _scaled_sinh(psi_val: float, dist: float, lam: float) -> float:
    """(e^{psi*d} - e^{-psi*d}) / e^{psi*lam}, stable for tiny and huge args."""
    x = psi_val * dist
    if 2.0 * x < 1.0:
        # difference of near-equal exponentials: route through expm1
        return math.exp(-psi_val * (dist + lam)) * math.expm1(2.0 * x)
    return _exp(psi_val * (dist - lam)) - _exp(-psi_val * (dist + lam))


def _scaled_growth(psi_val: float, dist: float, lam: float) -> float:
    """(e^{psi*d} - e^{-psi*d}) * e^{psi*d} / e^{psi*lam} = e^{-psi*lam} * expm1(2*psi*d)."""
    x = 2.0 * psi_val * dist
    if x <= _EXP_MAX:
        return math.exp(-psi_val * lam) * math.expm1(x)
    return _exp(psi_val * (2.0 * dist - lam)) - _exp(-psi_val * lam)


def conditional_mean(g_plus: float, g_minus: float, zeta: float, nu: float,
                     lam: float, psi_val: float) -> float:
    """Kernel-weighted blend of the two neighbor noises.

    ``zeta``/``nu`` are the distances to the lower/upper reward neighbor,
    ``lam`` the distance between the neighbors.  Evaluated with e^{psi*lam}
    factored out of numerator and denominator so large kernel scales stay
    finite.
    """
    _check_geometry(zeta, nu, lam)
    den = -math.expm1(-2.0 * psi_val * lam)
    num = (_scaled_sinh(psi_val, zeta, lam) * g_plus
           + _scaled_sinh(psi_val, nu, lam) * g_minus)
    return num / den


def conditional_var(zeta: float, nu: float, lam: float, psi_val: float,
                    sigma: float) -> float:
    """Conditional variance sigma * clamp(d, 0, 1).

    The raw d is negative for every interior point, so the clamp floors it
    at zero: a state coinciding with a neighbor gets that neighbor's noise
    deterministically.
    """
    _check_geometry(zeta, nu, lam)
    return sigma * _clamp01(raw_variance_factor(zeta, nu, lam, psi_val))


def raw_variance_factor(zeta: float, nu: float, lam: float,
                        psi_val: float) -> float:
    """The unclamped d from the printed conditional-variance formula."""
    _check_geometry(zeta, nu, lam)
    den = -math.expm1(-2.0 * psi_val * lam)
    num = _scaled_growth(psi_val, zeta, lam) + _scaled_growth(psi_val, nu, lam)
    return 1.0 - num / den


def exact_ou_variance_factor(zeta: float, nu: float, lam: float,
                             psi_val: float) -> float:
    """Two-point Ornstein-Uhlenbeck conditional variance factor, in [0, 1]
    for any metric-consistent geometry."""
    _check_geometry(zeta, nu, lam)
    num = math.expm1(-2.0 * psi_val * zeta) * math.expm1(-2.0 * psi_val * nu)
    return num / -math.expm1(-2.0 * psi_val * lam)


def _check_geometry(zeta: float, nu: float, lam: float) -> None:
    if zeta < 0 or nu < 0 or lam < 0:
        raise ValueError("distances must be nonnegative")
    if lam == 0:
        raise DegenerateGeometryError("conditioning neighbors coincide")


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


class NoiseStore:
    """Per-action reward-sorted state sets plus state -> noise dictionaries.

    State keys are the exact float tuple of the normalized observation.
    Re-inserting a known vector adds another sorted-set entry (stable among
    equal rewards) but never changes its stored noise.  Noise for a state is
    materialized for *every* action the first time any action asks, so a
    later neighbor lookup never dangles.
    """

    def __init__(self, n_actions: int = 2):
        self.n_actions = n_actions
        self.reset()

    def reset(self) -> None:
        """Drop every sorted set and noise table (episode start)."""
        # per action: entries (reward, insertion seq, state key), kept sorted
        self._sorted: list[list[tuple[float, int, tuple]]] = [
            [] for _ in range(self.n_actions)]
        self._noise: list[dict[tuple, float]] = [
            {} for _ in range(self.n_actions)]
        self._vectors: dict[tuple, np.ndarray] = {}
        self._neighbors: dict[tuple, tuple[tuple | None, tuple | None]] = {}
        self._seq = 0

    def size(self, action: int) -> int:
        return len(self._sorted[action])

    def stored_noise(self, action: int, state) -> float | None:
        return self._noise[action].get(_key(state))

    def insert(self, action: int, reward: float, state) -> tuple:
        """Insert ``state`` into ``action``'s set at ascending-reward position.

        Equal rewards keep insertion order.  Returns the reward-order
        neighbor keys ``(below, above)``, either possibly None; the pair is
        also remembered so a later noise draw for this state conditions on
        the same neighbors.
        """
        key = _key(state)
        entries = self._sorted[action]
        entry = (float(reward), self._seq, key)
        self._seq += 1
        idx = bisect_left(entries, entry)   # (reward, seq) is unique
        entries.insert(idx, entry)
        lower = entries[idx - 1][2] if idx > 0 else None
        upper = entries[idx + 1][2] if idx + 1 < len(entries) else None
        self._vectors.setdefault(key, np.asarray(state, dtype=float).copy())
        self._neighbors[key] = (lower, upper)
        return lower, upper

    def sample(self, action: int, reward: float, state, cfg: FgpmConfig,
               rng: np.random.Generator) -> float:
        """Noise for ``(state, action)``, drawing and storing it if unseen.

        A state never inserted is first inserted under ``action`` with
        ``reward`` as its sort key.  Values for all actions of the state are
        drawn in action order on first touch.  With ``cfg.sigma == 0`` the
        result is exactly 0.0 and the generator is not consumed, so a
        zero-noise run shares its random stream with a noise-free trainer.
        """
        key = _key(state)
        table = self._noise[action]
        if key in table:
            return table[key]
        if key not in self._neighbors:
            self.insert(action, reward, state)
        lower, upper = self._neighbors[key]
        for a in range(self.n_actions):
            if key not in self._noise[a]:
                self._noise[a][key] = self._draw(a, key, lower, upper, cfg, rng)
        return table[key]

    def _draw(self, action: int, key: tuple, lower: tuple | None,
              upper: tuple | None, cfg: FgpmConfig,
              rng: np.random.Generator) -> float:
        sigma = cfg.sigma
        if sigma == 0.0:
            return 0.0
        psi_val = cfg.psi
        if lower is None and upper is None:
            mu, var = 0.0, sigma * sigma        # process prior
        else:
            vec = self._vectors[key]
            if lower is not None and upper is not None:
                zeta = _dist(vec, self._vectors[lower])
                nu = _dist(self._vectors[upper], vec)
                lam = _dist(self._vectors[upper], self._vectors[lower])
                if lam == 0.0:
                    # duplicate vectors at both flanks: one effective neighbor
                    mu, var = self._one_point(action, lower, zeta, psi_val, sigma)
                else:
                    mu = conditional_mean(self._noise[action][upper],
                                          self._noise[action][lower],
                                          zeta, nu, lam, psi_val)
                    if cfg.exact_ou_variance:
                        var = sigma * _clamp01(
                            exact_ou_variance_factor(zeta, nu, lam, psi_val))
                    else:
                        var = conditional_var(zeta, nu, lam, psi_val, sigma)
            else:
                nbr = lower if lower is not None else upper
                mu, var = self._one_point(action, nbr,
                                          _dist(vec, self._vectors[nbr]),
                                          psi_val, sigma)
        return float(rng.normal(mu, math.sqrt(var)))

    def _one_point(self, action: int, nbr: tuple, delta: float,
                   psi_val: float, sigma: float) -> tuple[float, float]:
        """Single-neighbor conditional of the exponential-kernel process."""
        decay = math.exp(-psi_val * delta)
        mu = decay * self._noise[action][nbr]
        var = sigma * -math.expm1(-2.0 * psi_val * delta)
        return mu, var


def _key(state) -> tuple:
    return tuple(float(x) for x in state)


def _dist(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))
