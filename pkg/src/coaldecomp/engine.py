"""
Full Möbius decomposition of a quantity of interest over all input coalitions.

:func:`decompose` estimates phi_A for every coalition, inverts the table to
psi by Möbius inversion and attaches diagnostics. Standard errors of psi are
propagated assuming independent phi estimates (each coalition draws from its
own stream), so se(psi_A)^2 = sum over B subset of A of se(phi_B)^2; this is
an approximation and is labelled as such in the report.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .estimators import (
    EstimationError,
    EstimatorBudget,
    QoISpec,
    conditional_mean_function,
    estimate_phi,
    resolved_kernel,
)
from .inputs import InputModel
from .lattice import (
    MAX_DIMENSION,
    SetFunctionTable,
    format_subset,
    full_mask,
    mobius_transform,
    zeta_transform,
)
from .models import Model
from .rings import DkRejection, check_dk_membership

THREADS_ENV = "COALDECOMP_THREADS"
NEAR_ZERO_SE = 10.0
SIGN_SE = 3.0


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _popcounts(d: int) -> np.ndarray:
    masks = np.arange(1 << d, dtype=np.uint32)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(masks).astype(np.int64)
    counts = np.zeros(1 << d, dtype=np.int64)
    for i in range(d):
        counts += (masks >> i) & 1
    return counts


def sum_tolerance(phi: SetFunctionTable) -> float:
    """Floating-point budget for the sum identity: 2^d * d * eps * max|phi|."""
    scale = float(np.max(np.abs(phi.values))) if phi.values.size else 0.0
    return (1 << phi.d) * phi.d * np.finfo(float).eps * scale


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FractionalFlag:
    status: str  # "holds" | "violated" | "not-applicable"
    violations: tuple = ()
    reason: str = ""

    def to_dict(self) -> dict:
        out = {"status": self.status, "violations": [format_subset(m) for m in self.violations]}
        if self.reason:
            out["reason"] = self.reason
        return out


@dataclass(frozen=True)
class GradualCertificate:
    qoi: str
    certified: bool
    conditional_function: Optional[str]
    constructor: Optional[Callable] = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"certified": self.certified, "f_A": self.conditional_function}


@dataclass(frozen=True, eq=False)
class AttributionVector:
    values: np.ndarray
    std_errors: Optional[np.ndarray] = None
    method: str = "shapley"


@dataclass(eq=False)
class DecompositionReport:
    model: Model
    inputs: InputModel
    qoi: QoISpec
    budget: EstimatorBudget
    phi: SetFunctionTable
    phi_se: SetFunctionTable
    psi: SetFunctionTable
    psi_se: SetFunctionTable
    total: object
    total_se: object
    ratios: Optional[np.ndarray]
    ratio_se: Optional[np.ndarray]
    sum_residual: object
    sum_tol: float
    total_near_zero: bool
    fractional: FractionalFlag
    gradual: GradualCertificate
    dk_membership: Optional[dict] = None
    attribution: Optional[AttributionVector] = None
    bandwidth: Optional[float] = None
    wall_time: float = 0.0

    @property
    def d(self) -> int:
        return self.phi.d

    @property
    def sum_identity_ok(self) -> bool:
        return bool(np.all(np.abs(self.sum_residual) <= self.sum_tol))


def _near_zero(total, total_se) -> bool:
    return bool(np.any(np.abs(total) <= NEAR_ZERO_SE * total_se))


def _fractional_flag(qoi: QoISpec, psi, psi_se, total, total_se) -> FractionalFlag:
    if not qoi.is_scalar:
        return FractionalFlag("not-applicable", reason="matrix-valued QoI")
    if _near_zero(total, total_se):
        return FractionalFlag("not-applicable", reason="total is zero within noise")
    sign = np.sign(total)
    resolved = np.abs(psi.values) > SIGN_SE * psi_se.values
    bad = np.flatnonzero(resolved & (np.sign(psi.values) != sign))
    if bad.size:
        return FractionalFlag("violated", tuple(int(m) for m in bad))
    return FractionalFlag("holds")


def check_fractional(report: DecompositionReport) -> FractionalFlag:
    """
    Sign test of every psi_A against the total.

    Terms within 3 propagated standard errors of zero count as compatible,
    as do exact zeros.
    """
    return _fractional_flag(report.qoi, report.psi, report.psi_se, report.total, report.total_se)


def verify_gradual(qoi: QoISpec) -> GradualCertificate:
    """Name the E_A-measurable function f_A with phi_A = QoI(f_A), when one exists."""
    if qoi.kind == "variance":
        return GradualCertificate(qoi.kind, True, f"E[G_{qoi.output + 1}(X) | X_A]",
                                  conditional_mean_function)
    if qoi.kind == "covariance":
        p, q = qoi.pair
        return GradualCertificate(qoi.kind, True,
                                  f"(E[G_{p + 1}(X) | X_A], E[G_{q + 1}(X) | X_A])",
                                  conditional_mean_function)
    if qoi.kind == "covmatrix":
        return GradualCertificate(qoi.kind, True, "E[G(X) | X_A] (vector of conditional means)",
                                  conditional_mean_function)
    return GradualCertificate(qoi.kind, False, None)


# ---------------------------------------------------------------------------
# Shapley attribution from Harsanyi dividends
# ---------------------------------------------------------------------------

def _shapley_weights(d: int) -> np.ndarray:
    # w[s] = s! (d - s - 1)! / d!
    return np.array([1.0 / (d * math.comb(d - 1, s)) for s in range(d)])


def shapley_attribution(psi: SetFunctionTable, phi_se: Optional[SetFunctionTable] = None) -> AttributionVector:
    """
    Equal split of every dividend psi_A among the members of A.

    When ``phi_se`` is given, standard errors are propagated from the
    (independent) phi estimates through the marginal-contribution form of
    the Shapley value.
    """
    if psi.value_shape != ():
        raise ValueError("Shapley attribution needs a scalar psi table")
    d = psi.d
    sizes = _popcounts(d)
    masks = np.arange(1 << d)
    share = np.zeros(1 << d)
    share[1:] = psi.values[1:] / sizes[1:]
    values = np.array([share[(masks >> i) & 1 == 1].sum() for i in range(d)])
    se = None
    if phi_se is not None:
        w = _shapley_weights(d)
        var = phi_se.values.astype(float) ** 2
        se = np.empty(d)
        for i in range(d):
            member = (masks >> i) & 1 == 1
            coef = np.where(member, w[np.clip(sizes - 1, 0, d - 1)], w[np.clip(sizes, 0, d - 1)])
            se[i] = math.sqrt(float(np.sum(coef ** 2 * var)))
    return AttributionVector(values, se)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

def check_compatible(model: Model, inputs: InputModel, qoi: QoISpec) -> None:
    if inputs.d > MAX_DIMENSION:
        raise ValueError(f"d={inputs.d} exceeds the dimension cap of {MAX_DIMENSION}")
    if model.d != inputs.d:
        raise ValueError(f"model takes {model.d} inputs but the input model has {inputs.d}")
    qoi.check_output_dim(model.k)


def _ratio_std_errors(psi, psi_se, phi_se, total, ratios) -> np.ndarray:
    # linearization of psi_A / phi_D with independent phi_B
    full = psi.full
    se_d = float(phi_se.values[full])
    var = psi_se.values ** 2
    contains_d = np.zeros_like(var)
    contains_d[full] = se_d ** 2
    coef_d = -ratios.copy()
    coef_d[full] += 1.0
    return np.sqrt(np.clip(var - contains_d, 0.0, None) + (coef_d * se_d) ** 2) / abs(total)


def decompose(model: Model, inputs: InputModel, qoi: QoISpec, budget: EstimatorBudget,
              threads: Optional[int] = None) -> DecompositionReport:
    """
    Estimate phi over every coalition and return its Möbius decomposition.

    Results do not depend on ``threads``: every coalition is estimated from
    its own derived random streams and written to its own table slot.
    """
    check_compatible(model, inputs, qoi)
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    started = time.perf_counter()
    d = inputs.d
    bandwidth = None
    if qoi.kind == "mmd":
        try:
            kernel = resolved_kernel(model, inputs, qoi.kernel, budget)
        except ValueError as exc:
            raise EstimationError(f"bandwidth resolution failed: {exc}") from exc
        qoi = QoISpec.mean_mmd(kernel)
        bandwidth = float(kernel.bandwidth)

    def work(mask):
        try:
            return estimate_phi(model, inputs, qoi, mask, budget)
        except Exception as exc:
            raise EstimationError(f"estimation failed for subset {{{format_subset(mask)}}}: {exc}",
                                  mask) from exc

    masks = range(1 << d)
    if threads == 1:
        estimates = [work(m) for m in masks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            estimates = list(pool.map(work, masks))

    phi = SetFunctionTable(d, np.stack([np.asarray(e.value, dtype=float) for e in estimates]))
    phi_se = SetFunctionTable(d, np.stack([np.asarray(e.std_error, dtype=float) for e in estimates]))
    psi = mobius_transform(phi)
    psi_se = SetFunctionTable(d, np.sqrt(zeta_transform(SetFunctionTable(d, phi_se.values ** 2)).values))

    full = full_mask(d)
    total, total_se = phi.values[full], phi_se.values[full]
    residual = psi.values.sum(axis=0) - total
    near_zero = _near_zero(total, total_se) if qoi.is_scalar else bool(
        np.any(_near_zero(np.diag(total), np.diag(total_se))))

    ratios = ratio_se = None
    if qoi.is_scalar and not near_zero:
        ratios = psi.values / total
        ratio_se = _ratio_std_errors(psi, psi_se, phi_se, float(total), ratios)

    dk = None
    if not qoi.is_scalar:
        try:
            member = check_dk_membership(total)
            dk = {"accepted": True, "diag_sign": member.diag_sign}
        except DkRejection as exc:
            dk = {"accepted": False, "condition": exc.condition}

    attribution = shapley_attribution(psi, phi_se) if qoi.is_scalar else None

    return DecompositionReport(
        model=model, inputs=inputs, qoi=qoi, budget=budget,
        phi=phi, phi_se=phi_se, psi=psi, psi_se=psi_se,
        total=total.copy() if not qoi.is_scalar else float(total),
        total_se=total_se.copy() if not qoi.is_scalar else float(total_se),
        ratios=ratios, ratio_se=ratio_se,
        sum_residual=residual if not qoi.is_scalar else float(residual),
        sum_tol=sum_tolerance(phi),
        total_near_zero=near_zero,
        fractional=_fractional_flag(qoi, psi, psi_se, total, total_se),
        gradual=verify_gradual(qoi),
        dk_membership=dk,
        attribution=attribution,
        bandwidth=bandwidth,
        wall_time=time.perf_counter() - started,
    )
