"""Seeded random streams and the samplers the simulator draws from.

Streams wrap numpy's PCG64 bit generator. Sub-streams are derived through
``SeedSequence([seed, *keys])`` so that a (base_seed, run_index) pair always
maps to the same, statistically independent stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DEFAULT_SEED = 20201118
_UINT64 = 2**64


class RngStream:
    """A single-owner random stream identified by a 64-bit seed and a key path."""

    def __init__(self, seed: int = DEFAULT_SEED, keys: tuple[int, ...] = ()):
        if not 0 <= int(seed) < _UINT64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *self.keys])))

    def derive(self, *keys: int) -> "RngStream":
        """Return the sub-stream at ``keys`` below this one. Pure in (seed, keys)."""
        return RngStream(self.seed, self.keys + tuple(keys))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, keys={self.keys})"


def _as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    return rng.generator if isinstance(rng, RngStream) else rng


def sample_neg_binomial(mean, dispersion, rng, size=None):
    """Negative binomial with E[X] = mean and Var[X] = mean + mean**2 / dispersion.

    Drawn as a gamma-Poisson mixture (shape ``dispersion``, scale
    ``mean / dispersion``). ``mean`` and ``dispersion`` may be arrays.
    """
    mean = np.asarray(mean, dtype=float)
    dispersion = np.asarray(dispersion, dtype=float)
    if np.any(~(mean > 0)) or np.any(~(dispersion > 0)):
        raise ParameterError("negative binomial needs mean > 0 and dispersion > 0")
    gen = _as_generator(rng)
    out = gen.negative_binomial(dispersion, dispersion / (dispersion + mean), size=size)
    return int(out) if np.ndim(out) == 0 else out


def sample_poisson(rate, rng, size=None):
    rate = np.asarray(rate, dtype=float)
    if np.any(~np.isfinite(rate)) or np.any(rate < 0):
        raise ParameterError("poisson rate must be finite and >= 0")
    out = _as_generator(rng).poisson(rate, size=size)
    return int(out) if np.ndim(out) == 0 else out


def sample_truncated_poisson(rate, cap, rng, size=None):
    """Poisson draw clamped at ``cap``: min(X, cap)."""
    if int(cap) != cap or cap < 0:
        raise ParameterError(f"cap must be a nonnegative integer, got {cap}")
    out = np.minimum(sample_poisson(rate, rng, size=size), int(cap))
    return int(out) if np.ndim(out) == 0 else out


_KINDS = {
    "neg_binomial": ("mean", "dispersion"),
    "poisson": ("rate",),
    "truncated_poisson": ("rate", "cap"),
    "normal": ("mu", "sigma"),
    "lognormal": ("mu", "sigma"),
    "uniform": ("lo", "hi"),
    "exp_uniform_minus_one": ("hi",),
}


@dataclass(frozen=True)
class DistributionSpec:
    """A named distribution with its parameters, e.g. ``normal(2.03, 1.2)``.

    ``exp_uniform_minus_one(hi)`` is ``exp(U[0, hi]) - 1``.
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown distribution kind {self.kind!r}")
        if len(self.params) != len(_KINDS[self.kind]):
            raise ParameterError(f"{self.kind} takes parameters {_KINDS[self.kind]}, got {self.params}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        self.validate()

    def validate(self) -> None:
        p = self.params
        if not all(math.isfinite(x) for x in p):
            raise ParameterError(f"{self} has non-finite parameters")
        k = self.kind
        if k == "neg_binomial" and not (p[0] > 0 and p[1] > 0):
            raise ParameterError("neg_binomial needs mean > 0 and dispersion > 0")
        if k in ("poisson", "truncated_poisson") and p[0] < 0:
            raise ParameterError("poisson rate must be >= 0")
        if k == "truncated_poisson" and (p[1] < 0 or p[1] != int(p[1])):
            raise ParameterError("cap must be a nonnegative integer")
        if k in ("normal", "lognormal") and p[1] < 0:
            raise ParameterError("sigma must be >= 0")
        if k == "uniform" and p[0] > p[1]:
            raise ParameterError("uniform needs lo <= hi")
        if k == "exp_uniform_minus_one" and p[0] < 0:
            raise ParameterError("exp_uniform_minus_one needs hi >= 0")

    def sample(self, rng, size=None):
        gen = _as_generator(rng)
        k, p = self.kind, self.params
        if k == "neg_binomial":
            return sample_neg_binomial(p[0], p[1], gen, size)
        if k == "poisson":
            return sample_poisson(p[0], gen, size)
        if k == "truncated_poisson":
            return sample_truncated_poisson(p[0], p[1], gen, size)
        if k == "normal":
            return gen.normal(p[0], p[1], size)
        if k == "lognormal":
            return gen.lognormal(p[0], p[1], size)
        if k == "uniform":
            return gen.uniform(p[0], p[1], size)
        return np.expm1(gen.uniform(0.0, p[0], size))

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(repr(x) for x in self.params)})"

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Inverse of ``str``: ``"lognormal(-0.79, 1.19)"``."""
        text = text.strip()
        if not text.endswith(")") or "(" not in text:
            raise ParameterError(f"cannot parse distribution {text!r}")
        name, _, rest = text[:-1].partition("(")
        try:
            params = tuple(float(x) for x in rest.split(",") if x.strip())
        except ValueError as exc:
            raise ParameterError(f"cannot parse distribution {text!r}") from exc
        return cls(name.strip(), params)


@dataclass(frozen=True)
class Archetype:
    """Distributions for a venue's log post mean, dispersion, and engagement rate."""

    log_post_mean: DistributionSpec
    dispersion: DistributionSpec
    engagement_rate: DistributionSpec


@dataclass(frozen=True)
class VenueParams:
    a: float  # log mean weekly posts
    b: float  # negative binomial dispersion
    lambda0: float  # initial engagements per post

    @property
    def post_mean(self) -> float:
        return math.exp(self.a)


def sample_venue_params(archetype: Archetype, rng, n: int | None = None):
    """Draw venue parameters. Returns one VenueParams, or three arrays (a, b, lambda0) when ``n`` is given."""
    gen = _as_generator(rng)
    size = 1 if n is None else n
    a = np.asarray(archetype.log_post_mean.sample(gen, size), dtype=float)
    b = np.asarray(archetype.dispersion.sample(gen, size), dtype=float)
    lam = np.asarray(archetype.engagement_rate.sample(gen, size), dtype=float)
    if np.any(b <= 0):
        raise ParameterError("dispersion draws must be strictly positive; check the archetype")
    if np.any(lam < 0):
        raise ParameterError("engagement-rate draws must be >= 0; check the archetype")
    if n is None:
        return VenueParams(float(a[0]), float(b[0]), float(lam[0]))
    return a, b, lam
