"""Seeded random-variate generation for the EPM samplers.

Every sampler takes an :class:`RngStream` (or a bare ``numpy.random.Generator``)
and draws from it. Streams are built on PCG64 seeded through ``SeedSequence``
so that child streams obtained with :meth:`RngStream.split` are reproducible
and statistically independent.
"""

from __future__ import annotations

import math
import warnings
from typing import Any

import numpy as np

__all__ = [
    "ParameterDomainError",
    "DegenerateWeightsError",
    "RngStream",
    "as_generator",
    "sample_primitive",
    "sample_gamma",
    "sample_truncated_poisson",
    "truncated_poisson_array",
    "sample_crt",
    "crt_array",
    "sample_multinomial_counts",
    "POISSON_RATE_CAP",
]

# Above this rate Po+ is returned as round(rate); the relative error is < 1e-4.
POISSON_RATE_CAP = 1e8


class ParameterDomainError(ValueError):
    """A distribution parameter is non-finite or outside its domain."""


class DegenerateWeightsError(ValueError):
    """Multinomial weights are all zero while a positive total is requested."""


class RngStream:
    """Single-owner random stream.

    Parameters
    ----------
    seed : int or numpy.random.SeedSequence
        64-bit unsigned seed. Identical seeds give identical sequences.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            seed = int(seed)
            if seed < 0 or seed >= 2**64:
                raise ParameterDomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
            self._seq = np.random.SeedSequence(seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))
        # Draws that hit POISSON_RATE_CAP.
        self.saturation_count = 0

    @property
    def seed(self) -> int:
        return int(self._seq.entropy)

    def split(self, n: int) -> list["RngStream"]:
        """Return ``n`` independent child streams.

        Children are derived with ``SeedSequence.spawn``; the k-th call to
        ``split`` on a stream always yields the same children.
        """
        return [RngStream(child) for child in self._seq.spawn(n)]

    def child(self, *key: int) -> "RngStream":
        """Deterministic child keyed by integers, independent of call order."""
        seq = np.random.SeedSequence(
            self._seq.entropy, spawn_key=tuple(self._seq.spawn_key) + tuple(int(k) for k in key)
        )
        return RngStream(seq)

    def get_state(self) -> dict[str, Any]:
        return {
            "entropy": int(self._seq.entropy),
            "spawn_key": [int(k) for k in self._seq.spawn_key],
            "n_children_spawned": int(self._seq.n_children_spawned),
            "bit_generator": self.gen.bit_generator.state,
            "saturation_count": int(self.saturation_count),
        }

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "RngStream":
        seq = np.random.SeedSequence(
            state["entropy"],
            spawn_key=tuple(state["spawn_key"]),
            n_children_spawned=state["n_children_spawned"],
        )
        stream = cls(seq)
        stream.gen.bit_generator.state = state["bit_generator"]
        stream.saturation_count = int(state.get("saturation_count", 0))
        return stream

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, spawn_key={tuple(self._seq.spawn_key)})"


def as_generator(stream) -> np.random.Generator:
    if isinstance(stream, RngStream):
        return stream.gen
    if isinstance(stream, np.random.Generator):
        return stream
    raise TypeError(f"expected RngStream or numpy Generator, got {type(stream).__name__}")


def _check_positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterDomainError(f"{name} must be finite and > 0, got {value!r}")
    return arr


def sample_gamma(stream, shape, scale=1.0, size=None):
    """Gamma draw(s) with mean ``shape * scale``."""
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    return as_generator(stream).gamma(shape, scale, size=size)


def sample_primitive(stream, dist: str, *params, size=None):
    """Draw from one of the primitive distributions.

    ``dist`` is one of ``gamma(shape, scale)``, ``beta(a, b)``,
    ``poisson(rate)``, ``bernoulli(p)`` or ``uniform()``.
    A zero Poisson rate is accepted and yields 0.
    """
    gen = as_generator(stream)
    if dist == "gamma":
        shape, scale = params
        return sample_gamma(gen, shape, scale, size=size)
    if dist == "beta":
        a, b = params
        _check_positive("alpha", a)
        _check_positive("beta", b)
        return gen.beta(a, b, size=size)
    if dist == "poisson":
        (rate,) = params
        arr = np.asarray(rate, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ParameterDomainError(f"rate must be finite and >= 0, got {rate!r}")
        return gen.poisson(rate, size=size)
    if dist == "bernoulli":
        (p,) = params
        arr = np.asarray(p, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
            raise ParameterDomainError(f"p must lie in [0, 1], got {p!r}")
        out = gen.random(size=size if size is not None else arr.shape) < arr
        return out.astype(np.int64) if out.ndim else int(out)
    if dist == "uniform":
        if params:
            raise ParameterDomainError("uniform takes no parameters (it is Unif(0, 1))")
        return gen.random(size=size)
    raise ParameterDomainError(f"unknown distribution {dist!r}")


def truncated_poisson_array(stream, rate, return_attempts=False):
    """Vectorised zero-truncated Poisson draws.

    For ``rate >= 1`` Po(rate) is redrawn until it is at least one. For
    ``rate < 1`` we draw ``n ~ Po(rate)`` and ``u ~ U(0, 1)`` until
    ``u < 1 / (n + 1)`` and return ``n + 1``.

    Rates above :data:`POISSON_RATE_CAP` return ``round(rate)`` and are counted
    on ``stream.saturation_count`` when a :class:`RngStream` is given.

    If ``return_attempts`` is true, also returns the per-element number of
    loop iterations used.
    """
    gen = as_generator(stream)
    rate = np.asarray(rate, dtype=float)
    flat = rate.ravel()
    if not np.all(np.isfinite(flat)) or np.any(flat <= 0):
        raise ParameterDomainError("truncated Poisson rate must be finite and > 0")
    out = np.empty(flat.shape, dtype=np.int64)
    attempts = np.zeros(flat.shape, dtype=np.int64)

    capped = flat > POISSON_RATE_CAP
    if capped.any():
        out[capped] = np.round(flat[capped]).astype(np.int64)
        attempts[capped] = 1
        n_cap = int(capped.sum())
        if isinstance(stream, RngStream):
            stream.saturation_count += n_cap
        warnings.warn(
            f"{n_cap} truncated-Poisson rate(s) above {POISSON_RATE_CAP:g} saturated to round(rate)",
            RuntimeWarning,
            stacklevel=2,
        )

    high = np.flatnonzero((flat >= 1.0) & ~capped)
    while high.size:
        draw = gen.poisson(flat[high])
        attempts[high] += 1
        ok = draw >= 1
        out[high[ok]] = draw[ok]
        high = high[~ok]

    low = np.flatnonzero(flat < 1.0)
    while low.size:
        n = gen.poisson(flat[low])
        u = gen.random(low.size)
        attempts[low] += 1
        ok = u < 1.0 / (n + 1.0)
        out[low[ok]] = n[ok] + 1
        low = low[~ok]

    out = out.reshape(rate.shape)
    if return_attempts:
        return out, attempts.reshape(rate.shape)
    return out


def sample_truncated_poisson(stream, rate: float) -> int:
    """Single draw from the zero-truncated Poisson Po+(rate)."""
    if not (isinstance(rate, (int, float, np.floating, np.integer)) and math.isfinite(rate) and rate > 0):
        raise ParameterDomainError(f"rate must be finite and > 0, got {rate!r}")
    return int(truncated_poisson_array(stream, np.array([rate]))[0])


def crt_array(stream, n, a):
    """Vectorised Chinese-restaurant-table draws.

    Element-wise ``sum_{t=1}^{n} Bernoulli(a / (a + t - 1))`` computed by
    explicit summation. One uniform is consumed per Bernoulli trial, in
    element order, so draws are monotone in ``a`` under common random numbers.
    """
    gen = as_generator(stream)
    n = np.asarray(n)
    a = np.broadcast_to(np.asarray(a, dtype=float), n.shape)
    if np.any(n < 0):
        raise ParameterDomainError("CRT count n must be >= 0")
    nf = n.ravel().astype(np.int64)
    af = a.ravel()
    active = nf > 0
    if np.any(~np.isfinite(af[active])) or np.any(af[active] <= 0):
        raise ParameterDomainError("CRT concentration a must be finite and > 0")
    total = int(nf.sum())
    if total == 0:
        return np.zeros(n.shape, dtype=np.int64)
    owner = np.repeat(np.arange(nf.size), nf)
    starts = np.cumsum(nf) - nf
    t = np.arange(total) - starts[owner]  # t - 1 in 0-based form
    aa = af[owner]
    hits = gen.random(total) * (aa + t) < aa
    return np.bincount(owner, weights=hits, minlength=nf.size).astype(np.int64).reshape(n.shape)


def sample_crt(stream, n: int, a: float) -> int:
    """Single CRT draw; ``a`` must be > 0 even when ``n`` is 0."""
    if n < 0:
        raise ParameterDomainError(f"n must be >= 0, got {n}")
    if not (math.isfinite(a) and a > 0):
        raise ParameterDomainError(f"a must be finite and > 0, got {a}")
    return int(crt_array(stream, np.array([n]), np.array([a]))[0])


def sample_multinomial_counts(stream, total: int, weights) -> np.ndarray:
    """Multinomial counts with probabilities proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if total < 0:
        raise ParameterDomainError(f"total must be >= 0, got {total}")
    if w.ndim != 1 or w.size == 0:
        raise ParameterDomainError("weights must be a non-empty 1-d array")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ParameterDomainError("weights must be finite and >= 0")
    if total == 0:
        return np.zeros(w.size, dtype=np.int64)
    s = w.sum()
    if s <= 0:
        raise DegenerateWeightsError("all multinomial weights are zero but total > 0")
    return as_generator(stream).multinomial(int(total), w / s).astype(np.int64)
