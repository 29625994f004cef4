"""
Benchmark models with known decompositions.

Every model maps arrays of shape ``(..., d)`` to ``(..., k)``; the output
axis is kept even when k = 1.
"""

from __future__ import annotations

import math

import numpy as np

from .inputs import IndependentMarginals, InputModel, MultivariateGaussian, Uniform
from .lattice import bit_positions, check_mask, full_mask


class NoOracleError(LookupError):
    """No closed form is registered for the (model, inputs) pair."""


class Model:
    name: str
    d: int
    k: int

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.d,):
            raise ValueError(f"{self.name} takes {self.d} inputs, got trailing shape {x.shape[-1:]}")
        return self._eval(x)

    def evaluate(self, x) -> np.ndarray:
        return self(x)

    def _eval(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Ishigami(Model):
    r"""
    :math:`\sin x_1 + a \sin^2 x_2 + b x_3^4 \sin x_1`, three inputs, one output.
    """

    name = "ishigami"
    d = 3
    k = 1

    def __init__(self, a: float = 7.0, b: float = 0.1):
        self.a = float(a)
        self.b = float(b)

    def _eval(self, x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        s1 = np.sin(x1)
        y = s1 + self.a * np.sin(x2) ** 2 + self.b * x3 ** 4 * s1
        return y[..., None]

    def partial_variances(self) -> dict[int, float]:
        """Nonzero Hoeffding partial variances under independent U(-pi, pi) inputs, keyed by mask."""
        a, b, pi = self.a, self.b, math.pi
        return {
            0b001: 0.5 * (1.0 + b * pi ** 4 / 5.0) ** 2,
            0b010: a ** 2 / 8.0,
            0b101: b ** 2 * pi ** 8 * (1.0 / 18.0 - 1.0 / 50.0),
        }

    def total_variance(self) -> float:
        a, b, pi = self.a, self.b, math.pi
        return a ** 2 / 8.0 + b * pi ** 4 / 5.0 + b ** 2 * pi ** 8 / 18.0 + 0.5

    def to_dict(self) -> dict:
        return {"name": self.name, "a": self.a, "b": self.b}


class Linear(Model):
    """Scalar linear model ``intercept + beta . x``."""

    name = "linear"
    k = 1

    def __init__(self, beta, intercept: float = 0.0):
        self.beta = np.asarray(beta, dtype=float)
        if self.beta.ndim != 1 or self.beta.size == 0:
            raise ValueError("beta must be a nonempty vector")
        self.d = self.beta.size
        self.intercept = float(intercept)

    def _eval(self, x):
        return (x @ self.beta + self.intercept)[..., None]

    def to_dict(self) -> dict:
        return {"name": self.name, "beta": self.beta.tolist(), "intercept": self.intercept}


class LinearMap(Model):
    """Vector linear model ``x -> M x`` with M of shape (k, d)."""

    name = "linear_map"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.size == 0:
            raise ValueError("matrix must be a nonempty 2-D array")
        self.k, self.d = self.matrix.shape

    def _eval(self, x):
        return x @ self.matrix.T

    def to_dict(self) -> dict:
        return {"name": self.name, "matrix": self.matrix.tolist()}


class SumDifference(LinearMap):
    """``(x1 + x2, x1 - x2)``."""

    name = "sum_difference"

    def __init__(self):
        super().__init__([[1.0, 1.0], [1.0, -1.0]])

    def to_dict(self) -> dict:
        return {"name": self.name}


class Constant(Model):
    name = "constant"

    def __init__(self, d: int, value: float = 0.0, k: int = 1):
        self.d = int(d)
        self.k = int(k)
        self.value = float(value)

    def _eval(self, x):
        return np.full(x.shape[:-1] + (self.k,), self.value)

    def to_dict(self) -> dict:
        return {"name": self.name, "d": self.d, "value": self.value, "k": self.k}


REGISTRY = {
    "ishigami": lambda p: Ishigami(p.get("a", 7.0), p.get("b", 0.1)),
    "linear": lambda p: Linear(p["beta"], p.get("intercept", 0.0)),
    "linear_map": lambda p: LinearMap(p["matrix"]),
    "sum_difference": lambda p: SumDifference(),
    "constant": lambda p: Constant(p["d"], p.get("value", 0.0), p.get("k", 1)),
}


def model_from_dict(spec: dict) -> Model:
    name = spec.get("name", spec.get("model"))
    if name not in REGISTRY:
        raise ValueError(f"unknown model {name!r}; registered models: {', '.join(sorted(REGISTRY))}")
    try:
        return REGISTRY[name](spec)
    except KeyError as exc:
        raise ValueError(f"model {name!r} is missing parameter {exc}") from None


def evaluate(model: Model, x) -> np.ndarray:
    return model(x)


# ---------------------------------------------------------------------------
# Closed-form variance set functions
# ---------------------------------------------------------------------------

def _is_uniform_pi(inputs: InputModel) -> bool:
    return (isinstance(inputs, IndependentMarginals) and inputs.d == 3
            and all(isinstance(m, Uniform) and m.a == -math.pi and m.b == math.pi
                    for m in inputs.marginals))


def oracle_variance_phi(model: Model, inputs: InputModel, mask: int) -> float:
    """
    Exact Var[E[G(X) | X_A]] for the registered (model, inputs) pairs.

    Registered pairs: linear model with Gaussian inputs (variance of the
    projection onto the conditioning coordinates), Ishigami with independent
    U(-pi, pi) inputs, linear (additive) models with independent inputs, and
    constant models with any inputs.
    """
    if model.d != inputs.d:
        raise ValueError(f"model takes {model.d} inputs but the input model has {inputs.d}")
    check_mask(mask, model.d)
    if isinstance(model, Constant):
        return 0.0
    if isinstance(model, Linear) and isinstance(inputs, MultivariateGaussian):
        if mask == 0:
            return 0.0
        a = bit_positions(mask)
        s = inputs.cov
        cross = s[:, a].T @ model.beta
        return float(cross @ np.linalg.solve(s[np.ix_(a, a)], cross))
    if isinstance(model, Linear) and isinstance(inputs, IndependentMarginals):
        return float(sum(model.beta[j] ** 2 * inputs.marginals[j].var() for j in bit_positions(mask)))
    if isinstance(model, Ishigami) and _is_uniform_pi(inputs):
        return float(sum(v for b, v in model.partial_variances().items() if b & ~mask == 0))
    raise NoOracleError(f"no closed form for model {model.name!r} with {inputs.kind} inputs")


def oracle_total_variance(model: Model, inputs: InputModel) -> float:
    return oracle_variance_phi(model, inputs, full_mask(model.d))
