"""phi-divergences between discrete measures.

``D_phi(P || Q) = sum_{q>0} q * phi(p/q) + phi'(inf) * P(q == 0)``

with the conventions ``0 * phi'(inf) = 0`` and ``q * phi(0/q) = q * phi(0+)``.
``+inf`` is an ordinary return value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidMass
from .measure import DiscreteMeasure, align


def _kl(t):
    t = np.asarray(t, dtype=float)
    return t * np.log(np.where(t > 0, t, 1.0))


def _kl_prime(t):
    return np.log(t) + 1.0


def _chi2(t):
    return (np.asarray(t, dtype=float) - 1.0) ** 2


def _chi2_prime(t):
    return 2.0 * (t - 1.0)


def _tv(t):
    return 0.5 * np.abs(np.asarray(t, dtype=float) - 1.0)


def _tv_prime(t):
    return 0.5 * np.sign(t - 1.0)


def _hellinger(t):
    return (np.sqrt(np.asarray(t, dtype=float)) - 1.0) ** 2


def _hellinger_prime(t):
    return 1.0 - 1.0 / np.sqrt(t)


@dataclass(frozen=True)
class PhiGenerator:
    """Convex ``phi`` with ``phi(1) = 0`` and its boundary values.

    Attributes
    ----------
    name : str
        Registry key (``"kl"``, ``"chi2"``, ``"tv"``, ``"hellinger"``).
    fn, derivative : callable
        Vectorized ``phi`` and ``phi'`` on ``t > 0``.
    phi_at_zero : float
        ``lim_{t -> 0+} phi(t)``.
    phi_prime_at_inf : float
        ``lim_{t -> inf} phi(t) / t``; may be ``inf``.
    strictly_convex : bool
        Whether the Jensen equality case pins down the minimizer.
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    phi_at_zero: float
    phi_prime_at_inf: float
    strictly_convex: bool = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self.fn(np.where(t > 0, t, 1.0))
        return np.where(t > 0, out, self.phi_at_zero)

    def __repr__(self) -> str:
        return f"PhiGenerator({self.name!r})"


GENERATORS: dict[str, PhiGenerator] = {
    "kl": PhiGenerator("kl", _kl, _kl_prime, 0.0, math.inf),
    "chi2": PhiGenerator("chi2", _chi2, _chi2_prime, 1.0, math.inf),
    "tv": PhiGenerator("tv", _tv, _tv_prime, 0.5, 0.5, strictly_convex=False),
    "hellinger": PhiGenerator("hellinger", _hellinger, _hellinger_prime, 1.0, 1.0),
}


def get_generator(phi: str | PhiGenerator) -> PhiGenerator:
    if isinstance(phi, PhiGenerator):
        return phi
    try:
        return GENERATORS[phi]
    except KeyError:
        raise KeyError(f"unknown generator {phi!r}; choose from {sorted(GENERATORS)}") from None


def divergence_terms(phi: PhiGenerator, p, q) -> np.ndarray:
    """Per-atom contributions to ``D_phi``; broadcasts over leading axes of ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.broadcast_to(np.asarray(q, dtype=float), p.shape)
    pos = q > 0
    safe_q = np.where(pos, q, 1.0)
    absolutely = q * phi(np.where(pos, p / safe_q, 0.0))
    if math.isinf(phi.phi_prime_at_inf):
        singular = np.where(p > 0, math.inf, 0.0)
    else:
        singular = p * phi.phi_prime_at_inf
    return np.where(pos, absolutely, singular)


def divergence_from_weights(phi: PhiGenerator, p, q) -> np.ndarray | float:
    """``D_phi`` for aligned weight vectors (last axis indexes atoms)."""
    d = divergence_terms(phi, p, q).sum(axis=-1)
    d = np.maximum(d, 0.0)
    return float(d) if np.ndim(d) == 0 else d


def phi_divergence(phi: str | PhiGenerator, P: DiscreteMeasure, Q: DiscreteMeasure) -> float:
    """``D_phi(P || Q)`` for discrete measures, possibly ``inf``.

    Examples
    --------
    >>> from pushmatch.measure import make_measure, dirac
    >>> round(phi_divergence("tv", dirac(0.0), make_measure([0, 2], [0.6, 0.4])), 12)
    0.4
    """
    _, p, q = align(P, Q)
    return divergence_from_weights(get_generator(phi), p, q)


def predicted_phi_min(phi: str | PhiGenerator, nu1: float) -> float:
    """Optimal value ``nu1 * phi(1/nu1) + (1 - nu1) * phi(0+)`` of the range-constrained problem."""
    phi = get_generator(phi)
    if not 0.0 < nu1 <= 1.0:
        raise InvalidMass(f"nu1 must lie in (0, 1], got {nu1!r}")
    nu0 = 1.0 - nu1
    value = nu1 * float(phi(1.0 / nu1))
    if nu0 > 0:
        value += nu0 * phi.phi_at_zero
    return value
