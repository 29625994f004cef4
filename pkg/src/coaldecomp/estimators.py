"""
Nested Monte Carlo estimators of the set function phi_A for each QoI.

For a coalition A, outer points x_A are drawn from the marginal law of X_A
and, for each one, ``n_inner`` conditional draws of the remaining inputs are
taken from the exact conditional law. Moment-based QoIs use the inner means
and inner covariances with the usual 1/n_inner bias correction; the mean-MMD
QoI uses an unbiased U-statistic per outer point.

Random streams: every coalition owns independent child streams derived from
the master seed (see :func:`coaldecomp.inputs.derive_seed`), one per role.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .inputs import InputModel, derive_seed
from .lattice import bit_positions, check_mask, full_mask
from .models import Model

STREAM_OUTER = 0
STREAM_INNER = 1
STREAM_REF = 2
STREAM_BANDWIDTH = 3

# upper bound on floats held per inner-sampling chunk
_CHUNK_FLOATS = 1 << 22
_BANDWIDTH_POINTS = 1000


class EstimationError(RuntimeError):
    """Estimation failed for a given coalition."""

    def __init__(self, message: str, mask: Optional[int] = None):
        super().__init__(message)
        self.mask = mask


# ---------------------------------------------------------------------------
# Specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel exp(-|y - y'|^2 / (2 h^2)); ``bandwidth`` is h or ``"median"``."""

    family: str = "rbf"
    bandwidth: Union[float, str] = "median"

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}; only 'rbf' is available")
        bw = self.bandwidth
        if isinstance(bw, str):
            if bw not in ("median", "median-heuristic"):
                raise ValueError(f"bandwidth must be a positive number or 'median', got {bw!r}")
        elif not (math.isfinite(bw) and bw > 0):
            raise ValueError(f"bandwidth must be positive, got {bw}")

    @property
    def resolved(self) -> bool:
        return not isinstance(self.bandwidth, str)

    def __call__(self, x, y) -> np.ndarray:
        if not self.resolved:
            raise ValueError("kernel bandwidth has not been resolved")
        return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * self.bandwidth ** 2))

    def to_dict(self) -> dict:
        return {"family": self.family, "bandwidth": self.bandwidth}


@dataclass(frozen=True)
class QoISpec:
    """
    Which quantity of interest to decompose.

    Use the constructors :meth:`variance`, :meth:`covariance`,
    :meth:`covariance_matrix` and :meth:`mean_mmd`.
    """

    kind: str
    output: int = 0
    pair: tuple = (0, 1)
    kernel: Optional[KernelSpec] = None

    KINDS = ("variance", "covariance", "covmatrix", "mmd")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown QoI {self.kind!r}; expected one of {', '.join(self.KINDS)}")
        if self.kind == "mmd" and self.kernel is None:
            object.__setattr__(self, "kernel", KernelSpec())

    @classmethod
    def variance(cls, output: int = 0) -> "QoISpec":
        return cls("variance", output=output)

    @classmethod
    def covariance(cls, p: int = 0, q: int = 1) -> "QoISpec":
        return cls("covariance", pair=(p, q))

    @classmethod
    def covariance_matrix(cls) -> "QoISpec":
        return cls("covmatrix")

    @classmethod
    def mean_mmd(cls, kernel: Optional[KernelSpec] = None) -> "QoISpec":
        return cls("mmd", kernel=kernel or KernelSpec())

    @property
    def is_scalar(self) -> bool:
        return self.kind != "covmatrix"

    def check_output_dim(self, k: int) -> None:
        if self.kind == "variance" and not 0 <= self.output < k:
            raise ValueError(f"variance output index {self.output} out of range for a {k}-output model")
        if self.kind == "covariance":
            if k < 2:
                raise ValueError(f"covariance QoI needs a model with at least 2 outputs, got k={k}")
            p, q = self.pair
            if not (0 <= p < k and 0 <= q < k):
                raise ValueError(f"covariance pair {self.pair} out of range for a {k}-output model")

    def to_dict(self) -> dict:
        out: dict = {"qoi": self.kind}
        if self.kind == "variance":
            out["output"] = self.output
        elif self.kind == "covariance":
            out["pair"] = list(self.pair)
        elif self.kind == "mmd":
            out["kernel"] = self.kernel.to_dict()
        return out


@dataclass(frozen=True)
class EstimatorBudget:
    n_outer: int = 2000
    n_inner: int = 200
    n_ref: int = 1000
    seed: int = 0

    def __post_init__(self):
        for name in ("n_outer", "n_inner", "n_ref"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {v!r}")

    def to_dict(self) -> dict:
        return {"n_outer": int(self.n_outer), "n_inner": int(self.n_inner),
                "n_ref": int(self.n_ref), "seed": int(self.seed)}


@dataclass(frozen=True, eq=False)
class PhiEstimate:
    """Estimated phi_A with its standard error (same shape as the value)."""

    mask: int
    value: Union[float, np.ndarray]
    std_error: Union[float, np.ndarray]
    budget: EstimatorBudget


@dataclass(frozen=True, eq=False)
class ConditionalMoments:
    """
    Inner-loop statistics per outer point.

    means: (n_outer, k); covs: (n_outer, k, k) inner sample covariances
    (ddof=1); variances are their diagonals.
    """

    outer_points: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    n_inner: int

    @property
    def variances(self) -> np.ndarray:
        return np.diagonal(self.covs, axis1=1, axis2=2)


# ---------------------------------------------------------------------------
# Nested sampling
# ---------------------------------------------------------------------------

def _check_pair(model: Model, inputs: InputModel, mask: int) -> None:
    if model.d != inputs.d:
        raise ValueError(f"model takes {model.d} inputs but the input model has {inputs.d}")
    check_mask(mask, model.d)


def _outer_points(inputs: InputModel, mask: int, budget: EstimatorBudget) -> np.ndarray:
    joint = inputs.sample_joint(budget.n_outer, derive_seed(budget.seed, mask, STREAM_OUTER))
    return joint.values[:, bit_positions(mask)]


def _inner_outputs(model, inputs, mask, outer, n_inner, rng):
    """Yield (slice, outputs of shape (m, n_inner, k)) chunk by chunk."""
    chunk = max(1, _CHUNK_FLOATS // (n_inner * max(inputs.d, model.k)))
    for start in range(0, outer.shape[0], chunk):
        stop = min(start + chunk, outer.shape[0])
        block = inputs.sample_conditional(mask, outer[start:stop], n_inner, rng)
        yield slice(start, stop), model(block.values)


def estimate_conditional_mean_table(model: Model, inputs: InputModel, mask: int,
                                    budget: EstimatorBudget) -> ConditionalMoments:
    """Inner means and covariances of G(X) given X_A = x_A at each outer point."""
    _check_pair(model, inputs, mask)
    if mask == 0 or mask == full_mask(inputs.d):
        raise ValueError("the empty and full coalitions are handled without inner sampling")
    outer = _outer_points(inputs, mask, budget)
    rng = np.random.default_rng(derive_seed(budget.seed, mask, STREAM_INNER))
    n_inner = budget.n_inner
    means = np.empty((outer.shape[0], model.k))
    covs = np.empty((outer.shape[0], model.k, model.k))
    for sl, y in _inner_outputs(model, inputs, mask, outer, n_inner, rng):
        m = y.mean(axis=1)
        c = y - m[:, None, :]
        means[sl] = m
        covs[sl] = np.einsum("jip,jiq->jpq", c, c) / (n_inner - 1)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return ConditionalMoments(outer, means, covs, n_inner)


def _symmetric(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _mean_and_se(terms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = terms.shape[0]
    return _symmetric(terms.mean(axis=0)), _symmetric(terms.std(axis=0, ddof=1) / math.sqrt(n))


def phi_covariance_matrix(model: Model, inputs: InputModel, mask: int,
                          budget: EstimatorBudget) -> tuple[np.ndarray, np.ndarray]:
    """
    Matrix of Cov(E[G_i | X_A], E[G_j | X_A]) and its standard errors.

    Standard errors come from the per-outer-point influence terms, i.e. the
    delta method applied over outer replicates.
    """
    _check_pair(model, inputs, mask)
    k = model.k
    if mask == 0:
        return np.zeros((k, k)), np.zeros((k, k))
    if mask == full_mask(inputs.d):
        n = budget.n_outer * budget.n_inner
        x = inputs.sample_joint(n, derive_seed(budget.seed, mask, STREAM_OUTER)).values
        y = model(x)
        c = y - y.mean(axis=0)
        terms = np.einsum("jp,jq->jpq", c, c) * (n / (n - 1))
        return _mean_and_se(terms)
    mom = estimate_conditional_mean_table(model, inputs, mask, budget)
    n = mom.means.shape[0]
    c = mom.means - mom.means.mean(axis=0)
    terms = np.einsum("jp,jq->jpq", c, c) * (n / (n - 1)) - mom.covs / mom.n_inner
    return _mean_and_se(terms)


def estimate_phi_covmatrix(model, inputs, mask, budget) -> PhiEstimate:
    value, se = phi_covariance_matrix(model, inputs, mask, budget)
    return PhiEstimate(mask, value, se, budget)


def estimate_phi_variance(model, inputs, mask, budget, output: int = 0) -> PhiEstimate:
    """Var[E[G_output(X) | X_A]], with phi of the empty coalition exactly 0."""
    QoISpec.variance(output).check_output_dim(model.k)
    value, se = phi_covariance_matrix(model, inputs, mask, budget)
    return PhiEstimate(mask, float(value[output, output]), float(se[output, output]), budget)


def estimate_phi_covariance(model, inputs, mask, pair, budget) -> PhiEstimate:
    p, q = pair
    QoISpec.covariance(p, q).check_output_dim(model.k)
    value, se = phi_covariance_matrix(model, inputs, mask, budget)
    return PhiEstimate(mask, float(value[p, q]), float(se[p, q]), budget)


# ---------------------------------------------------------------------------
# Mean MMD
# ---------------------------------------------------------------------------

def _as_points(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def resolve_bandwidth(outputs, spec: KernelSpec) -> float:
    """
    Fix the RBF bandwidth: an explicit value passes through, otherwise the
    median pairwise distance among the first 1000 reference outputs.
    """
    if spec.resolved:
        return float(spec.bandwidth)
    pts = _as_points(outputs)[:_BANDWIDTH_POINTS]
    if pts.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 reference outputs")
    med = float(np.median(pdist(pts)))
    if not med > 0:
        raise ValueError("median pairwise distance is zero (constant outputs); give an explicit bandwidth")
    return med


def resolved_kernel(model: Model, inputs: InputModel, kernel: KernelSpec,
                    budget: EstimatorBudget) -> KernelSpec:
    """Resolve the bandwidth once per experiment on a dedicated output sample."""
    if kernel.resolved:
        return kernel
    full = full_mask(inputs.d)
    x = inputs.sample_joint(min(budget.n_ref, _BANDWIDTH_POINTS),
                            derive_seed(budget.seed, full, STREAM_BANDWIDTH)).values
    return KernelSpec(kernel.family, resolve_bandwidth(model(x), kernel))


def mmd2_unbiased(x, y, kernel: KernelSpec) -> float:
    """Unbiased U-statistic of MMD^2 between two samples."""
    x, y = _as_points(x), _as_points(y)
    m, n = x.shape[0], y.shape[0]
    kxx = kernel(x, x)
    kyy = kernel(y, y)
    txx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    tyy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(txx + tyy - 2.0 * kernel(x, y).mean())


def estimate_phi_mmd(model: Model, inputs: InputModel, mask: int, kernel: KernelSpec,
                     budget: EstimatorBudget) -> PhiEstimate:
    """
    E over X_A of MMD^2 between the output law and the output law given X_A.

    The full coalition uses the closed form E[k(Y, Y)] - E[k(Y, Y')] with a
    V-statistic for the second term; other coalitions average a U-statistic
    between a reference output sample and each conditional output sample.
    """
    _check_pair(model, inputs, mask)
    if not kernel.resolved:
        kernel = resolved_kernel(model, inputs, kernel, budget)
    if mask == 0:
        return PhiEstimate(mask, 0.0, 0.0, budget)
    x_ref = inputs.sample_joint(budget.n_ref, derive_seed(budget.seed, mask, STREAM_REF)).values
    y_ref = model(x_ref)
    k_ref = kernel(y_ref, y_ref)
    n_ref = y_ref.shape[0]
    if mask == full_mask(inputs.d):
        row = k_ref.mean(axis=1)
        value = float(np.mean(np.diag(k_ref)) - row.mean())
        se = 2.0 * float(row.std(ddof=1)) / math.sqrt(n_ref)
        return PhiEstimate(mask, value, se, budget)

    t_ref = (k_ref.sum() - np.trace(k_ref)) / (n_ref * (n_ref - 1))
    outer = _outer_points(inputs, mask, budget)
    rng = np.random.default_rng(derive_seed(budget.seed, mask, STREAM_INNER))
    n_inner = budget.n_inner
    u = np.empty(outer.shape[0])
    for sl, z in _inner_outputs(model, inputs, mask, outer, n_inner, rng):
        for j, zj in zip(range(sl.start, sl.stop), z):
            kzz = kernel(zj, zj)
            t_zz = (kzz.sum() - np.trace(kzz)) / (n_inner * (n_inner - 1))
            u[j] = t_ref + t_zz - 2.0 * kernel(y_ref, zj).mean()
    # The reference sample is shared by every outer point. Its first-order
    # fluctuation cancels between the reference and cross terms, but the
    # degenerate part of the reference U-statistic does not and is invisible
    # to the spread of u; add its variance 2 Var(k~) / (n (n - 1)).
    row = k_ref.mean(axis=1)
    centred = k_ref - row[:, None] - row[None, :] + k_ref.mean()
    off = ~np.eye(n_ref, dtype=bool)
    var_ref = 2.0 * float(np.mean(centred[off] ** 2)) / (n_ref * (n_ref - 1))
    se = math.sqrt(u.var(ddof=1) / u.size + var_ref)
    return PhiEstimate(mask, float(u.mean()), se, budget)


# ---------------------------------------------------------------------------
# Conditional-mean functions f_A
# ---------------------------------------------------------------------------

def conditional_mean_function(model: Model, inputs: InputModel, mask: int,
                              n_inner: int = 1000, seed: int = 0) -> Callable[[np.ndarray], np.ndarray]:
    """
    Monte Carlo version of x_A -> E[G(X) | X_A = x_A].

    The returned function maps points of shape (m, |A|) to (m, k).
    """
    _check_pair(model, inputs, mask)
    if mask == full_mask(inputs.d):
        return model
    if mask == 0:
        y = model(inputs.sample_joint(n_inner, seed).values).mean(axis=0)
        return lambda x_a: np.broadcast_to(y, (np.atleast_2d(x_a).shape[0], model.k)).copy()

    def f(x_a):
        block = inputs.sample_conditional(mask, np.atleast_2d(x_a), n_inner, seed)
        return model(block.values).mean(axis=1)

    return f


def estimate_phi(model: Model, inputs: InputModel, qoi: QoISpec, mask: int,
                 budget: EstimatorBudget) -> PhiEstimate:
    """Dispatch on the QoI variant. MMD kernels must already be resolved."""
    if qoi.kind == "mmd":
        return estimate_phi_mmd(model, inputs, mask, qoi.kernel, budget)
    value, se = phi_covariance_matrix(model, inputs, mask, budget)
    if qoi.kind == "covmatrix":
        return PhiEstimate(mask, value, se, budget)
    p, q = (qoi.output, qoi.output) if qoi.kind == "variance" else qoi.pair
    return PhiEstimate(mask, float(value[p, q]), float(se[p, q]), budget)
