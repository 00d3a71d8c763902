"""Certified learning-rate windows for the catapult phase.

Every bound shares one structure: the catapult window opens at the linear
stability threshold ``2 / lambda_max(H_0)`` and is certified up to a
sufficient (not necessary) upper value obtained by bounding the tangent
kernel in terms of a monotone weight-norm quantity.  Where a matching lower
bound on the kernel exists, learning rates above a divergence threshold are
certified to diverge.

Single-datapoint bounds are proven; so are the multi-datapoint contraction
bound (``omega``) and the sample-Gram bound for homogenous nets
(``mlp_multi``), both up to dropped corrections of the size of the quadratic
coupling.  The effective-feature methods (``psi_eff``, ``bias_eff``) rest on
a frozen-top-eigenvector approximation and are flagged heuristic in every
report; the artifact never presents them as guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from catapult.datasets import Dataset
from catapult.models import HomogenousNet, QuadraticModel, relu_project
from catapult.numerics import (
    LinearOperator,
    Rng,
    lambda_max_symmetric,
    power_iteration_lambda_max,
    sym_eigen,
)

# Relative gap below which the top kernel eigenvalue is treated as degenerate
# for the effective-feature construction.
DEGENERACY_RTOL = 1e-10

NOTE_DROPPED_CORRECTIONS = (
    "upper value drops correction terms of the order of the squared quadratic "
    "coupling (1/width for nets); it is evaluated at the leading-order formula"
)
NOTE_RELU_EMPIRICAL = (
    "convergence is observed in practice well beyond this window (reported up "
    "to eta*H0 of roughly 12); such learning rates carry no guarantee here"
)


class BoundsError(ValueError):
    pass


@dataclass
class BoundReport:
    """One certified (or heuristic) learning-rate range.

    ``window_nonempty`` records whether the sufficient upper value actually
    exceeds the stability threshold; an empty window is a valid outcome that
    simply certifies nothing above the lazy regime.
    """

    method: str
    catapult_lower: float
    sufficient_upper: float
    divergence_lower: Optional[float]
    window_nonempty: bool
    proven: bool
    inputs_digest: dict
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not (self.catapult_lower > 0.0 and self.sufficient_upper > 0.0):
            raise BoundsError("bound edges must be positive")
        if (
            self.divergence_lower is not None
            and self.divergence_lower < self.sufficient_upper
        ):
            raise BoundsError("divergence bound cannot undercut the sufficient bound")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "catapult_lower": self.catapult_lower,
            "sufficient_upper": self.sufficient_upper,
            "divergence_lower": self.divergence_lower,
            "window_nonempty": self.window_nonempty,
            "proven": self.proven,
            "inputs_digest": dict(self.inputs_digest),
            "notes": list(self.notes),
        }


def _theta(model: QuadraticModel, theta0) -> np.ndarray:
    return model.theta if theta0 is None else np.asarray(theta0, dtype=np.float64)


def _psi_square_extremes(psi: np.ndarray) -> tuple[float, float, np.ndarray]:
    evals = np.linalg.eigvalsh(psi)
    squares = evals**2
    return float(squares.max()), float(squares.min()), squares


# ---------------------------------------------------------------------------
# Single-datapoint bounds
# ---------------------------------------------------------------------------


def bound_pure_quadratic(model: QuadraticModel, theta0=None) -> BoundReport:
    """Window for the pure quadratic model on one datapoint.

    The kernel satisfies ``H_t <= zeta**2 lambda_max(psi**2) theta_t**2``, so
    learning rates below ``4 / (zeta**2 theta0**2 lambda_max(psi**2))`` drive
    the weight norm down monotonically; the mirrored bound with the minimal
    eigenvalue certifies divergence.  When all eigenvalue magnitudes agree
    the two coincide and the uncertain region between them has zero size.
    """
    if model.variant != "pure":
        raise BoundsError("this window applies to the pure variant")
    if model.num_points != 1:
        raise BoundsError("single-datapoint bound evaluated on a multi-point model")
    if model.zeta <= 0.0:
        raise BoundsError("the pure-model window requires a positive coupling")
    theta0 = _theta(model, theta0)
    psi = model.meta_features[0]
    lam_max_sq, lam_min_sq, squares = _psi_square_extremes(psi)
    theta_sq = float(theta0 @ theta0)
    meta_theta = psi @ theta0
    h0 = model.zeta**2 * float(meta_theta @ meta_theta)
    if h0 <= 0.0:
        raise BoundsError("kernel vanishes at initialization; no window exists")

    upper = 4.0 / (model.zeta**2 * theta_sq * lam_max_sq)
    divergence = None
    if lam_min_sq > 1e-12 * lam_max_sq:
        divergence = 4.0 / (model.zeta**2 * theta_sq * lam_min_sq)
    expected_nonempty = lam_max_sq < (2.0 / model.n) * float(squares.sum())
    return BoundReport(
        method="single_datapoint",
        catapult_lower=2.0 / h0,
        sufficient_upper=upper,
        divergence_lower=divergence,
        window_nonempty=upper > 2.0 / h0,
        proven=True,
        inputs_digest={
            "family": "pure_quadratic",
            "n": model.n,
            "num_points": 1,
            "zeta": model.zeta,
            "theta0_sq": theta_sq,
            "lambda_max_psi_sq": lam_max_sq,
            "lambda_min_psi_sq": lam_min_sq,
            "h0": h0,
            "window_nonempty_in_expectation": expected_nonempty,
        },
    )


def bound_quadratic_with_bias(model: QuadraticModel, theta0=None) -> BoundReport:
    """Window for the with-bias quadratic model on one datapoint.

    The monotone quantity is the weight norm plus the squared
    feature-aligned component, which obeys the same update identity with the
    kernel shifted by the squared feature norm; bounding it yields
    ``4 / (2 phi**2 + zeta**2 lambda_max(psi**2) (theta0**2 + (phi.theta0)**2/phi**2))``.
    """
    if model.variant != "with_bias":
        raise BoundsError("this window applies to the with-bias variant")
    if model.num_points != 1:
        raise BoundsError("single-datapoint bound evaluated on a multi-point model")
    theta0 = _theta(model, theta0)
    phi = model.features[0]
    phi_sq = float(phi @ phi)
    if phi_sq == 0.0:
        raise BoundsError("feature vector vanishes; use the pure-model window")
    psi = model.meta_features[0]
    lam_max_sq, _, _ = _psi_square_extremes(psi)
    theta_sq = float(theta0 @ theta0)
    overlap_sq = float(phi @ theta0) ** 2
    meta_theta = psi @ theta0
    h0 = phi_sq + model.zeta**2 * float(meta_theta @ meta_theta)

    denom = 2.0 * phi_sq + model.zeta**2 * lam_max_sq * (theta_sq + overlap_sq / phi_sq)
    upper = 4.0 / denom
    return BoundReport(
        method="single_datapoint",
        catapult_lower=2.0 / h0,
        sufficient_upper=upper,
        divergence_lower=None,
        window_nonempty=upper > 2.0 / h0,
        proven=True,
        inputs_digest={
            "family": "quadratic_with_bias",
            "n": model.n,
            "num_points": 1,
            "zeta": model.zeta,
            "theta0_sq": theta_sq,
            "phi_sq": phi_sq,
            "feature_overlap_sq": overlap_sq,
            "lambda_max_psi_sq": lam_max_sq,
            "h0": h0,
        },
    )


def bound_homogenous_mlp(net: HomogenousNet) -> BoundReport:
    """Window for a two-layer scale-invariant net on the unit datapoint.

    The kernel is bounded by ``a_plus**2 theta_t**2 / n`` above and, when the
    negative slope is non-zero, by ``a_minus**2 theta_t**2 / n`` below; the
    first gives the sufficient upper value ``4 n / (a_plus**2 theta0**2)``
    and the second a certified divergence threshold.  With equal slopes (a
    linear net) the window between them shrinks to zero size.  On average
    over initializations the window above the stability threshold is
    non-empty exactly when the negative slope is non-zero, which excludes
    ReLU; ReLU nets get their own reduced-norm window.
    """
    if net.input_dim != 1:
        raise BoundsError("single-datapoint window requires 1d inputs")
    theta_sq = net.weight_norm()
    h0 = float(net.ntk([[1.0]])[0, 0])
    if h0 <= 0.0:
        raise BoundsError("kernel vanishes at initialization; no window exists")
    upper = 4.0 * net.width / (net.a_plus**2 * theta_sq)
    divergence = None
    notes = []
    if net.a_minus > 0.0:
        divergence = 4.0 * net.width / (net.a_minus**2 * theta_sq)
    else:
        notes.append(
            "zero negative slope: no divergence certificate, and the window is "
            "empty on average; the ReLU reduced-norm window applies instead"
        )
    return BoundReport(
        method="single_datapoint",
        catapult_lower=2.0 / h0,
        sufficient_upper=upper,
        divergence_lower=divergence,
        window_nonempty=upper > 2.0 / h0,
        proven=True,
        inputs_digest={
            "family": "homogenous",
            "n": net.width,
            "num_points": 1,
            "a_minus": net.a_minus,
            "a_plus": net.a_plus,
            "theta0_sq": theta_sq,
            "h0": h0,
            "window_nonempty_in_expectation": net.a_minus != 0.0,
        },
        notes=notes,
    )


def bound_relu(net: HomogenousNet) -> BoundReport:
    """Window for the two-layer ReLU net on one 1d datapoint.

    Only the coordinates active at initialization ever move, so the argument
    runs on the reduced weight norm, whose value at initialization equals
    ``n * H_0``.  That makes the certified window exactly
    ``(2/H_0, 4/H_0)``.
    """
    if not net.is_relu:
        raise BoundsError("this window applies to ReLU nets")
    if net.input_dim != 1:
        raise BoundsError("the reduced-norm window requires 1d inputs")
    split = net.frozen_split if net.frozen_split is not None else relu_project(net)
    mask = split.p_plus
    reduced = float(
        net.u[mask, 0] @ net.u[mask, 0] + net.v[mask] @ net.v[mask]
    )
    if reduced == 0.0:
        raise BoundsError(
            "all first-layer weights are negative at initialization; the net is "
            "frozen and no window exists"
        )
    h0 = reduced / net.width
    return BoundReport(
        method="single_datapoint",
        catapult_lower=2.0 / h0,
        sufficient_upper=4.0 / h0,
        divergence_lower=None,
        window_nonempty=True,
        proven=True,
        inputs_digest={
            "family": "relu",
            "n": net.width,
            "num_points": 1,
            "reduced_theta0_sq": reduced,
            "h0": h0,
            "active_fraction": float(mask.mean()),
        },
        notes=[NOTE_RELU_EMPIRICAL],
    )


# ---------------------------------------------------------------------------
# Multi-datapoint bounds
# ---------------------------------------------------------------------------


def omega_operator(model: QuadraticModel) -> LinearOperator:
    """The meta-feature contraction as an implicit operator on pairs
    (datapoint, weight); its top eigenvalue certifies the multi-point window
    without materializing the (n*D) x (n*D) matrix."""
    psi = model.meta_features
    d_pts, n, _ = psi.shape
    scale = model.zeta**2 / d_pts
    # Flattened views turn the contraction into two plain matrix-vector
    # products: pool the per-datapoint blocks into weight space, then push
    # the pooled vector back through every block.
    push = psi.reshape(d_pts * n, n)
    pool = np.ascontiguousarray(psi.transpose(1, 0, 2).reshape(n, d_pts * n))

    def matvec(vec: np.ndarray) -> np.ndarray:
        return scale * (push @ (pool @ vec))

    return LinearOperator(dim=d_pts * n, matvec=matvec)


def omega_dense(model: QuadraticModel) -> np.ndarray:
    """Materialized contraction matrix; quadratic in memory, test-scale only."""
    psi = model.meta_features
    d_pts, n, _ = psi.shape
    dense = np.einsum("aij,bjk->aibk", psi, psi) * (model.zeta**2 / d_pts)
    return dense.reshape(d_pts * n, d_pts * n)


def bound_multi_omega(
    model: QuadraticModel,
    theta0=None,
    power_tol: float = 1e-6,
    power_max_iters: int = 10_000,
) -> BoundReport:
    """Multi-datapoint window for the pure model via the contraction operator.

    Sandwiching any unit direction of the error vector through the
    contraction gives ``sum_ab e_a e_b H_ab <= lambda_max(Omega) theta**2``,
    so rates below ``4 / (lambda_max(Omega) theta0**2)`` keep the norm
    decreasing whenever the loss is large.  Reduces to the single-datapoint
    formula at one datapoint.
    """
    if model.variant != "pure":
        raise BoundsError("the contraction window applies to the pure variant")
    if model.zeta <= 0.0:
        raise BoundsError("the contraction window requires a positive coupling")
    theta0 = _theta(model, theta0)
    theta_sq = float(theta0 @ theta0)
    result = power_iteration_lambda_max(
        omega_operator(model), rng=Rng(0), tol=power_tol, max_iters=power_max_iters
    )
    lam_omega = result.value
    if lam_omega <= 0.0:
        raise BoundsError("contraction operator has zero top eigenvalue")
    h0 = _ntk_at(model, theta0)
    lam0 = lambda_max_symmetric(h0)
    upper = 4.0 / (lam_omega * theta_sq)
    notes = [NOTE_DROPPED_CORRECTIONS]
    if not result.converged:
        notes.append(
            f"power iteration hit its {result.iterations}-step budget before "
            f"reaching relative tolerance {power_tol:g}"
        )
    return BoundReport(
        method="omega",
        catapult_lower=2.0 / lam0,
        sufficient_upper=upper,
        divergence_lower=None,
        window_nonempty=upper > 2.0 / lam0,
        proven=True,
        inputs_digest={
            "family": "pure_quadratic",
            "n": model.n,
            "num_points": model.num_points,
            "zeta": model.zeta,
            "theta0_sq": theta_sq,
            "lambda_max_omega": lam_omega,
            "lambda_max_h0": lam0,
            "power_iterations": result.iterations,
            "power_tol": power_tol,
        },
        notes=notes,
    )


def _ntk_at(model: QuadraticModel, theta0: np.ndarray) -> np.ndarray:
    eff = model.features + model.zeta * (model.meta_features @ theta0)
    h = eff @ eff.T / model.num_points
    return (h + h.T) / 2.0


def _top_eigenvector(h0: np.ndarray) -> tuple[np.ndarray, bool]:
    evals, evecs = sym_eigen(h0)
    degenerate = (
        h0.shape[0] > 1
        and evals[0] - evals[1] <= DEGENERACY_RTOL * max(abs(evals[0]), 1.0)
    )
    return evecs[:, 0], degenerate


def _effective_meta(model: QuadraticModel, top: np.ndarray) -> np.ndarray:
    pooled = np.einsum("a,aij->ij", top, model.meta_features) / np.sqrt(
        model.num_points
    )
    return (pooled + pooled.T) / 2.0


def bound_multi_psi_eff(model: QuadraticModel, theta0=None) -> BoundReport:
    """Multi-datapoint window from the effective meta-feature matrix.

    Pools the meta-features along the kernel's top eigenvector at
    initialization and applies the single-datapoint formula to the pooled
    matrix.  The pooling direction is assumed frozen during the growth
    phase, which is an approximation, so the report is flagged heuristic.
    Reduces to the single-datapoint formula at one datapoint.
    """
    if model.variant != "pure":
        raise BoundsError("the effective-feature window applies to the pure variant")
    if model.zeta <= 0.0:
        raise BoundsError("the effective-feature window requires a positive coupling")
    theta0 = _theta(model, theta0)
    theta_sq = float(theta0 @ theta0)
    h0 = _ntk_at(model, theta0)
    lam0 = lambda_max_symmetric(h0)
    top, degenerate = _top_eigenvector(h0)
    eff = _effective_meta(model, top)
    lam_eff_sq = float((np.linalg.eigvalsh(eff) ** 2).max())
    if lam_eff_sq <= 0.0:
        raise BoundsError("effective meta-feature matrix vanishes")
    upper = 4.0 / (model.zeta**2 * theta_sq * lam_eff_sq)
    notes = [
        "heuristic: assumes the kernel's top eigenvector stays frozen while "
        "the loss grows",
        NOTE_DROPPED_CORRECTIONS,
    ]
    if degenerate:
        notes.append(
            "top kernel eigenspace is degenerate; deterministically tie-broken "
            "to the first eigenvector of the sorted eigendecomposition"
        )
    return BoundReport(
        method="psi_eff",
        catapult_lower=2.0 / lam0,
        sufficient_upper=upper,
        divergence_lower=None,
        window_nonempty=upper > 2.0 / lam0,
        proven=False,
        inputs_digest={
            "family": "pure_quadratic",
            "n": model.n,
            "num_points": model.num_points,
            "zeta": model.zeta,
            "theta0_sq": theta_sq,
            "lambda_max_psi_eff_sq": lam_eff_sq,
            "lambda_max_h0": lam0,
            "top_eigenspace_degenerate": degenerate,
        },
        notes=notes,
    )


def bound_multi_bias_eff(model: QuadraticModel, theta0=None) -> BoundReport:
    """Multi-datapoint window for the with-bias model via pooled features.

    Pools both feature functions along the kernel's top eigenvector and
    applies the single-datapoint with-bias formula to the pooled pair.
    Flagged heuristic for the same frozen-eigenvector reason as the pure
    effective-feature method.  If the pooled feature vector vanishes the
    pure pooled formula is used instead and the fallback is flagged.
    """
    if model.variant != "with_bias":
        raise BoundsError("this window applies to the with-bias variant")
    theta0 = _theta(model, theta0)
    theta_sq = float(theta0 @ theta0)
    h0 = _ntk_at(model, theta0)
    lam0 = lambda_max_symmetric(h0)
    top, degenerate = _top_eigenvector(h0)
    eff_psi = _effective_meta(model, top)
    lam_eff_sq = float((np.linalg.eigvalsh(eff_psi) ** 2).max())
    eff_phi = (top @ model.features) / np.sqrt(model.num_points)
    phi_sq = float(eff_phi @ eff_phi)

    notes = [
        "heuristic: assumes the kernel's top eigenvector stays frozen while "
        "the loss grows",
        NOTE_DROPPED_CORRECTIONS,
    ]
    if degenerate:
        notes.append(
            "top kernel eigenspace is degenerate; deterministically tie-broken "
            "to the first eigenvector of the sorted eigendecomposition"
        )
    if phi_sq == 0.0:
        if model.zeta <= 0.0 or lam_eff_sq <= 0.0:
            raise BoundsError("pooled features and meta-features both vanish")
        upper = 4.0 / (model.zeta**2 * theta_sq * lam_eff_sq)
        notes.append(
            "pooled feature vector vanishes; fell back to the pure pooled formula"
        )
    else:
        overlap_sq = float(eff_phi @ theta0) ** 2
        denom = 2.0 * phi_sq + model.zeta**2 * lam_eff_sq * (
            theta_sq + overlap_sq / phi_sq
        )
        upper = 4.0 / denom
    return BoundReport(
        method="bias_eff",
        catapult_lower=2.0 / lam0,
        sufficient_upper=upper,
        divergence_lower=None,
        window_nonempty=upper > 2.0 / lam0,
        proven=False,
        inputs_digest={
            "family": "quadratic_with_bias",
            "n": model.n,
            "num_points": model.num_points,
            "zeta": model.zeta,
            "theta0_sq": theta_sq,
            "phi_eff_sq": phi_sq,
            "lambda_max_psi_eff_sq": lam_eff_sq,
            "lambda_max_h0": lam0,
            "top_eigenspace_degenerate": degenerate,
        },
        notes=notes,
    )


def bound_mlp_multi(net: HomogenousNet, dataset: Dataset) -> BoundReport:
    """Multi-datapoint window for two-layer scale-invariant nets.

    Bounding the kernel through the sample Gram matrix gives
    ``4 n D / (a_plus**2 lambda_max(X X^T) theta0**2)``.  Requires a
    non-zero negative slope; reduces to the single-datapoint formula on the
    unit datapoint.
    """
    if net.a_minus <= 0.0:
        raise BoundsError("the sample-Gram window requires a positive negative slope")
    x = dataset.inputs
    gram = x @ x.T
    lam_gram = lambda_max_symmetric((gram + gram.T) / 2.0)
    if lam_gram <= 0.0:
        raise BoundsError("sample Gram matrix vanishes")
    theta_sq = net.weight_norm()
    lam0 = lambda_max_symmetric(net.ntk(x))
    if lam0 <= 0.0:
        raise BoundsError("kernel vanishes at initialization; no window exists")
    upper = 4.0 * net.width * dataset.size / (net.a_plus**2 * lam_gram * theta_sq)
    return BoundReport(
        method="mlp_multi",
        catapult_lower=2.0 / lam0,
        sufficient_upper=upper,
        divergence_lower=None,
        window_nonempty=upper > 2.0 / lam0,
        proven=True,
        inputs_digest={
            "family": "homogenous",
            "n": net.width,
            "num_points": dataset.size,
            "a_minus": net.a_minus,
            "a_plus": net.a_plus,
            "theta0_sq": theta_sq,
            "lambda_max_sample_gram": lam_gram,
            "lambda_max_h0": lam0,
        },
        notes=[NOTE_DROPPED_CORRECTIONS],
    )


# ---------------------------------------------------------------------------
# Report collection for the CLI
# ---------------------------------------------------------------------------


def collect_bound_reports(model, dataset: Dataset):
    """All bounds applicable to a model/dataset pair, plus skip reasons.

    Returns ``(reports, skipped)`` where ``skipped`` lists
    ``{"method": ..., "reason": ...}`` entries for inapplicable bounds.
    """
    reports: list[BoundReport] = []
    skipped: list[dict] = []

    def attempt(name, fn):
        try:
            reports.append(fn())
        except BoundsError as exc:
            skipped.append({"method": name, "reason": str(exc)})

    if isinstance(model, QuadraticModel):
        if model.variant == "pure":
            if dataset.size == 1:
                attempt("single_datapoint", lambda: bound_pure_quadratic(model))
            else:
                skipped.append(
                    {
                        "method": "single_datapoint",
                        "reason": "dataset has more than one datapoint",
                    }
                )
            attempt("omega", lambda: bound_multi_omega(model))
            attempt("psi_eff", lambda: bound_multi_psi_eff(model))
        elif model.variant == "with_bias":
            if dataset.size == 1:
                attempt("single_datapoint", lambda: bound_quadratic_with_bias(model))
            else:
                skipped.append(
                    {
                        "method": "single_datapoint",
                        "reason": "dataset has more than one datapoint",
                    }
                )
            attempt("bias_eff", lambda: bound_multi_bias_eff(model))
        else:
            skipped.append(
                {
                    "method": "all",
                    "reason": "generic quadratic models carry no guarantees",
                }
            )
    elif isinstance(model, HomogenousNet):
        if model.is_relu:
            if dataset.size == 1 and model.input_dim == 1:
                attempt("single_datapoint", lambda: bound_relu(model))
            else:
                skipped.append(
                    {
                        "method": "single_datapoint",
                        "reason": "the ReLU window requires one 1d datapoint",
                    }
                )
            skipped.append(
                {
                    "method": "mlp_multi",
                    "reason": "requires a positive negative slope",
                }
            )
        else:
            if dataset.size == 1 and model.input_dim == 1:
                attempt("single_datapoint", lambda: bound_homogenous_mlp(model))
            else:
                skipped.append(
                    {
                        "method": "single_datapoint",
                        "reason": "the single-datapoint window requires one 1d datapoint",
                    }
                )
            attempt("mlp_multi", lambda: bound_mlp_multi(model, dataset))
    else:
        skipped.append(
            {
                "method": "all",
                "reason": "no learning-rate guarantees exist for deep ReLU nets",
            }
        )
    return reports, skipped
