"""
Input distributions with exact joint, marginal and conditional sampling.

Three families are supported, all with an analytic conditional law of the
free coordinates given pinned ones:

* :class:`IndependentMarginals` -- product of univariate marginals;
* :class:`MultivariateGaussian` -- conditionals by Schur complement;
* :class:`GaussianCopula` -- Gaussian conditionals in latent space, pushed
  through the marginal quantile functions.

Randomness is driven by :class:`numpy.random.SeedSequence`. Child streams for
a (coalition, stream) pair come from :func:`derive_seed`, which feeds the
pair as the sequence's spawn key, so streams never collide and do not depend
on the order in which work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from .lattice import bit_positions, check_mask, full_mask

Seed = Union[int, np.random.SeedSequence, np.random.Generator]

# Quantile arguments are kept inside (eps, 1 - eps) so that boundary points of
# bounded supports map to finite latent Gaussian values.
_U_EPS = 1e-15


def derive_seed(seed: Seed, mask: int, stream: int) -> np.random.SeedSequence:
    """Independent child seed for coalition ``mask`` and stream index ``stream``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (mask, stream))
    return np.random.SeedSequence(int(seed), spawn_key=(mask, stream))


def _rng(seed: Seed) -> np.random.Generator:
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Marginal families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    a: float
    b: float
    family = "uniform"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a < self.b):
            raise ValueError(f"uniform needs a < b, got ({self.a}, {self.b})")

    def ppf(self, u):
        return self.a + (self.b - self.a) * u

    def cdf(self, x):
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def in_support(self, x) -> np.ndarray:
        return (x >= self.a) & (x <= self.b)

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def var(self) -> float:
        return (self.b - self.a) ** 2 / 12.0

    def to_dict(self) -> dict:
        return {"family": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Normal:
    mean_: float
    std: float
    family = "normal"

    def __post_init__(self):
        if not (np.isfinite(self.mean_) and np.isfinite(self.std) and self.std > 0):
            raise ValueError(f"normal needs std > 0, got {self.std}")

    def ppf(self, u):
        return self.mean_ + self.std * ndtri(u)

    def cdf(self, x):
        return ndtr((x - self.mean_) / self.std)

    def in_support(self, x) -> np.ndarray:
        return np.isfinite(x)

    def mean(self) -> float:
        return self.mean_

    def var(self) -> float:
        return self.std ** 2

    def to_dict(self) -> dict:
        return {"family": "normal", "mean": self.mean_, "std": self.std}


@dataclass(frozen=True)
class Triangular:
    """Triangular law on [a, b] with mode c."""

    a: float
    c: float
    b: float
    family = "triangular"

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b) and self.a <= self.c <= self.b
                and self.a < self.b):
            raise ValueError(f"triangular needs a <= c <= b with a < b, got ({self.a}, {self.c}, {self.b})")

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        a, b, c = self.a, self.b, self.c
        split = (c - a) / (b - a)
        left = a + np.sqrt(u * (b - a) * (c - a))
        right = b - np.sqrt((1.0 - u) * (b - a) * (b - c))
        return np.where(u < split, left, right)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b, c = self.a, self.b, self.c
        with np.errstate(divide="ignore", invalid="ignore"):
            left = (x - a) ** 2 / ((b - a) * (c - a)) if c > a else np.zeros_like(x)
            right = 1.0 - (b - x) ** 2 / ((b - a) * (b - c)) if b > c else np.ones_like(x)
        out = np.where(x <= c, left, right)
        return np.clip(np.where(x < a, 0.0, np.where(x > b, 1.0, out)), 0.0, 1.0)

    def in_support(self, x) -> np.ndarray:
        return (x >= self.a) & (x <= self.b)

    def mean(self) -> float:
        return (self.a + self.b + self.c) / 3.0

    def var(self) -> float:
        a, b, c = self.a, self.b, self.c
        return (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0

    def to_dict(self) -> dict:
        return {"family": "triangular", "a": self.a, "c": self.c, "b": self.b}


Marginal = Union[Uniform, Normal, Triangular]


def marginal_from_dict(spec: dict) -> Marginal:
    family = spec.get("family")
    try:
        if family == "uniform":
            return Uniform(float(spec["a"]), float(spec["b"]))
        if family == "normal":
            return Normal(float(spec.get("mean", 0.0)), float(spec.get("std", 1.0)))
        if family == "triangular":
            return Triangular(float(spec["a"]), float(spec["c"]), float(spec["b"]))
    except KeyError as exc:
        raise ValueError(f"{family} marginal is missing parameter {exc}") from None
    raise ValueError(f"unknown marginal family {family!r}; expected uniform, normal or triangular")


# ---------------------------------------------------------------------------
# Sample blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SampleBlock:
    """Rows of input draws plus the seed that produced them."""

    values: np.ndarray
    seed: object = field(default=None)

    @property
    def n(self) -> int:
        return self.values.shape[-2]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


# ---------------------------------------------------------------------------
# Input models
# ---------------------------------------------------------------------------

def _cholesky(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(f"{what} is not symmetric positive-definite") from None


def _check_spd(m: np.ndarray, d: int, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (d, d):
        raise ValueError(f"{what} must be {d}x{d}, got {m.shape}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12):
        raise ValueError(f"{what} is not symmetric")
    _cholesky(m, what)
    return m


class InputModel:
    """Base class; subclasses implement joint and batched conditional sampling."""

    d: int
    kind: str

    def sample_joint(self, n: int, seed: Seed) -> SampleBlock:
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        return SampleBlock(self._joint(n, _rng(seed)), seed)

    def sample_conditional(self, mask: int, x_a, n: int, seed: Seed) -> SampleBlock:
        """
        Draw from the joint law with the coordinates in ``mask`` pinned to ``x_a``.

        ``x_a`` may be a single point of length |A| (result shape ``(n, d)``)
        or a batch of shape ``(m, |A|)`` (result shape ``(m, n, d)``, with n
        conditional draws per pinned point). The empty and full coalitions are
        rejected: callers treat them analytically.
        """
        check_mask(mask, self.d)
        if mask == 0 or mask == full_mask(self.d):
            raise ValueError("conditional sampling needs a nonempty proper coalition")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        pinned = bit_positions(mask)
        x_a = np.asarray(x_a, dtype=float)
        single = x_a.ndim == 1
        batch = np.atleast_2d(x_a)
        if batch.ndim != 2 or batch.shape[1] != len(pinned):
            raise ValueError(f"x_A must have {len(pinned)} coordinates, got shape {x_a.shape}")
        self._check_support(pinned, batch)
        free = [j for j in range(self.d) if j not in pinned]
        out = np.empty((batch.shape[0], n, self.d))
        out[:, :, pinned] = batch[:, None, :]
        out[:, :, free] = self._conditional_free(pinned, free, batch, n, _rng(seed))
        return SampleBlock(out[0] if single else out, seed)

    def _check_support(self, pinned: list[int], batch: np.ndarray) -> None:
        for col, j in enumerate(pinned):
            ok = self.marginal_support(j, batch[:, col])
            if not np.all(ok):
                raise ValueError(f"x_A outside the support of input {j + 1}")

    # subclass hooks
    def _joint(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _conditional_free(self, pinned, free, batch, n, rng) -> np.ndarray:
        raise NotImplementedError

    def marginal_support(self, j: int, x) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_dim(d: int) -> None:
    # no upper cap here: sampling works at any d, the lattice cap applies to decompositions
    if d < 1:
        raise ValueError("an input model needs at least one input")


class IndependentMarginals(InputModel):
    kind = "independent"

    def __init__(self, marginals: Sequence[Marginal]):
        self.marginals = tuple(marginals)
        if not self.marginals:
            raise ValueError("need at least one marginal")
        self.d = len(self.marginals)
        _check_dim(self.d)

    def _draw(self, cols, shape, rng) -> np.ndarray:
        u = rng.random(shape + (len(cols),))
        out = np.empty_like(u)
        for k, j in enumerate(cols):
            out[..., k] = self.marginals[j].ppf(u[..., k])
        return out

    def _joint(self, n, rng):
        return self._draw(list(range(self.d)), (n,), rng)

    def _conditional_free(self, pinned, free, batch, n, rng):
        return self._draw(free, (batch.shape[0], n), rng)

    def marginal_support(self, j, x):
        return self.marginals[j].in_support(x)

    def to_dict(self) -> dict:
        return {"type": "independent", "marginals": [m.to_dict() for m in self.marginals]}


def _gaussian_conditional(cov: np.ndarray, pinned, free):
    """Regression coefficients and Schur-complement covariance of free | pinned."""
    s_aa = cov[np.ix_(pinned, pinned)]
    s_fa = cov[np.ix_(free, pinned)]
    s_ff = cov[np.ix_(free, free)]
    coef = np.linalg.solve(s_aa, s_fa.T).T
    schur = s_ff - coef @ s_fa.T
    schur = 0.5 * (schur + schur.T)
    return coef, schur


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(m)
        return v * np.sqrt(np.clip(w, 0.0, None))


class MultivariateGaussian(InputModel):
    kind = "gaussian"

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        self.d = self.mean.shape[0]
        _check_dim(self.d)
        self.cov = _check_spd(cov, self.d, "covariance matrix")
        self._chol = np.linalg.cholesky(self.cov)
        self._cond_cache: dict[int, tuple] = {}

    def _joint(self, n, rng):
        z = rng.standard_normal((n, self.d))
        return self.mean + z @ self._chol.T

    def conditional_params(self, pinned, free):
        key = sum(1 << j for j in pinned)
        if key not in self._cond_cache:
            coef, schur = _gaussian_conditional(self.cov, pinned, free)
            self._cond_cache[key] = (coef, schur, _psd_sqrt(schur))
        return self._cond_cache[key]

    def _conditional_free(self, pinned, free, batch, n, rng):
        coef, _, root = self.conditional_params(pinned, free)
        cmean = self.mean[free] + (batch - self.mean[pinned]) @ coef.T
        z = rng.standard_normal((batch.shape[0], n, len(free)))
        return cmean[:, None, :] + z @ root.T

    def marginal_support(self, j, x):
        return np.isfinite(x)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "mean": self.mean.tolist(), "cov": self.cov.tolist()}


class GaussianCopula(InputModel):
    kind = "copula"

    def __init__(self, corr, marginals: Sequence[Marginal]):
        self.marginals = tuple(marginals)
        self.d = len(self.marginals)
        _check_dim(self.d)
        self.corr = _check_spd(corr, self.d, "correlation matrix")
        if not np.allclose(np.diag(self.corr), 1.0, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        self._chol = np.linalg.cholesky(self.corr)
        self._cond_cache: dict[int, tuple] = {}

    def _push(self, z: np.ndarray, cols) -> np.ndarray:
        u = np.clip(ndtr(z), _U_EPS, 1.0 - _U_EPS)
        out = np.empty_like(u)
        for k, j in enumerate(cols):
            out[..., k] = self.marginals[j].ppf(u[..., k])
        return out

    def _joint(self, n, rng):
        z = rng.standard_normal((n, self.d)) @ self._chol.T
        return self._push(z, list(range(self.d)))

    def _conditional_free(self, pinned, free, batch, n, rng):
        key = sum(1 << j for j in pinned)
        if key not in self._cond_cache:
            coef, schur = _gaussian_conditional(self.corr, pinned, free)
            self._cond_cache[key] = (coef, _psd_sqrt(schur))
        coef, root = self._cond_cache[key]
        latent = np.empty_like(batch)
        for col, j in enumerate(pinned):
            u = np.clip(self.marginals[j].cdf(batch[:, col]), _U_EPS, 1.0 - _U_EPS)
            latent[:, col] = ndtri(u)
        cmean = latent @ coef.T
        z = cmean[:, None, :] + rng.standard_normal((batch.shape[0], n, len(free))) @ root.T
        return self._push(z, free)

    def marginal_support(self, j, x):
        return self.marginals[j].in_support(x)

    def to_dict(self) -> dict:
        return {"type": "copula", "corr": self.corr.tolist(),
                "marginals": [m.to_dict() for m in self.marginals]}


def sample_joint(model: InputModel, n: int, seed: Seed) -> SampleBlock:
    return model.sample_joint(n, seed)


def sample_conditional(model: InputModel, mask: int, x_a, n: int, seed: Seed) -> SampleBlock:
    return model.sample_conditional(mask, x_a, n, seed)


def input_model_from_dict(spec: dict) -> InputModel:
    """Build an input model from its JSON description."""
    kind = spec.get("type")
    if kind == "independent":
        return IndependentMarginals([marginal_from_dict(m) for m in spec["marginals"]])
    if kind == "gaussian":
        return MultivariateGaussian(spec["mean"], spec["cov"])
    if kind == "copula":
        return GaussianCopula(spec["corr"], [marginal_from_dict(m) for m in spec["marginals"]])
    raise ValueError(f"unknown input model type {kind!r}; expected independent, gaussian or copula")


def uniform_pi(d: int = 3) -> IndependentMarginals:
    """Independent U(-pi, pi) inputs, the usual Ishigami setting."""
    return IndependentMarginals([Uniform(-math.pi, math.pi)] * d)
