"""Runtime-checkable invariants behind the ``check`` subcommand.

Each check trains a small instance and measures the residual of an identity
that holds exactly (up to roundoff) when the implementation is correct: the
weight-norm update identity for every homogeneity-weight-two family, the
frozen complement of the ReLU sign split, the quadratic update recursions
against recomputation, kernel freezing at zero coupling, and exactness of
the linearized predictor on a linear model.  A deliberate negative control
corrupts the gradient's slope convention at exactly-zero preactivations and
must make the identity fail; catching it proves the checks have teeth.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from catapult.analysis import linearized_predict
from catapult.datasets import (
    Dataset,
    EigenScheme,
    MetaFeatureSpec,
    assemble_quadratic,
    build_meta_features,
    make_toy,
    zeta_for,
)
from catapult.models import HomogenousNet, QuadraticModel, linear_net_with_bias_embedding
from catapult.numerics import Rng, lambda_max_symmetric
from catapult.training import (
    TrainConfig,
    quad_update_consistency,
    train,
    weight_norm_identity_residuals,
)

IDENTITY_TOL = 1e-9
OVERLAP_TOL = 1e-8
FREEZE_TOL = 1e-12
NEGATIVE_CONTROL_MIN = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _identity_config(eta: float, max_steps: int = 5000) -> TrainConfig:
    return TrainConfig(
        eta=eta, max_steps=max_steps, ntk_eval_interval=1, record_outputs=True
    )


def _pure_toy_model(n: int, seed: int) -> QuadraticModel:
    rng = Rng(seed)
    feature_map = build_meta_features(
        MetaFeatureSpec(n_psi=n, n_phi=0, d=1, eigen_scheme=EigenScheme("uniform", 1.0, 2.0)),
        rng.child(1),
    )
    return assemble_quadratic(feature_map, make_toy(), zeta_for("2_over_n", n), rng.child(2))


def check_pure_quadratic_identity(seed: int = 0) -> CheckResult:
    model = _pure_toy_model(48, seed)
    dataset = make_toy()
    eta = 3.0 / float(model.ntk()[0, 0])
    traj = train(model, dataset, _identity_config(eta))
    residual = float(weight_norm_identity_residuals(traj, "total").max())
    return CheckResult(
        name="weight_norm_identity_pure_quadratic",
        passed=residual < IDENTITY_TOL,
        residual=residual,
        threshold=IDENTITY_TOL,
        detail=f"termination={traj.termination} steps={traj.steps_taken}",
    )


def check_homogenous_identity(seed: int = 0) -> CheckResult:
    net = HomogenousNet.init_random(96, Rng(seed).child(3), a_minus=0.5, a_plus=1.0)
    dataset = make_toy()
    eta = 3.0 / float(net.ntk(dataset.inputs)[0, 0])
    traj = train(net, dataset, _identity_config(eta))
    residual = float(weight_norm_identity_residuals(traj, "total").max())
    return CheckResult(
        name="weight_norm_identity_homogenous",
        passed=residual < IDENTITY_TOL,
        residual=residual,
        threshold=IDENTITY_TOL,
        detail=f"termination={traj.termination} steps={traj.steps_taken}",
    )


def check_relu_reduced_identity(seed: int = 0) -> CheckResult:
    net = HomogenousNet.init_random(96, Rng(seed).child(4), a_minus=0.0, a_plus=1.0)
    dataset = make_toy()
    eta = 3.0 / float(net.ntk(dataset.inputs)[0, 0])
    traj = train(net, dataset, _identity_config(eta))
    residual = float(weight_norm_identity_residuals(traj, "reduced").max())
    return CheckResult(
        name="weight_norm_identity_relu_reduced",
        passed=residual < IDENTITY_TOL,
        residual=residual,
        threshold=IDENTITY_TOL,
        detail=f"termination={traj.termination} steps={traj.steps_taken}",
    )


def check_relu_frozen_complement(seed: int = 0) -> CheckResult:
    net = HomogenousNet.init_random(64, Rng(seed).child(5), a_minus=0.0, a_plus=1.0)
    dataset = make_toy()
    split = net.frozen_split
    u_minus_before = net.u[split.p_minus].copy()
    v_minus_before = net.v[split.p_minus].copy()
    eta = 3.0 / float(net.ntk(dataset.inputs)[0, 0])
    drift = 0.0
    for _ in range(200):
        z = net.outputs(dataset.inputs)
        net.apply_gd_step(dataset.inputs, z - dataset.labels, eta)
        drift = max(
            drift,
            float(np.abs(net.u[split.p_minus] - u_minus_before).max(initial=0.0)),
            float(np.abs(net.v[split.p_minus] - v_minus_before).max(initial=0.0)),
        )
    return CheckResult(
        name="relu_frozen_complement",
        passed=drift == 0.0,
        residual=drift,
        threshold=0.0,
        detail="inactive first-layer coordinates must stay bit-identical",
    )


def check_bias_combined_identity(seed: int = 0) -> CheckResult:
    model = linear_net_with_bias_embedding(32, Rng(seed).child(6), bias0=0.0)
    dataset = make_toy()
    phi = model.features[0]
    phi_sq = float(phi @ phi)
    eta = 3.0 / float(model.ntk()[0, 0])
    traj = train(model, dataset, _identity_config(eta))
    residual = float(
        weight_norm_identity_residuals(traj, "combined", h_shift=phi_sq).max()
    )
    return CheckResult(
        name="weight_norm_identity_bias_combined",
        passed=residual < IDENTITY_TOL,
        residual=residual,
        threshold=IDENTITY_TOL,
        detail=f"termination={traj.termination} steps={traj.steps_taken}",
    )


def check_update_recursions_pure(seed: int = 0) -> CheckResult:
    rng = Rng(seed)
    feature_map = build_meta_features(
        MetaFeatureSpec(n_psi=24, n_phi=0, d=2, eigen_scheme=EigenScheme("uniform", 1.0, 2.0)),
        rng.child(7),
    )
    dataset = Dataset(
        inputs=rng.child(8).uniform(-0.5, 0.5, (4, 2)),
        labels=rng.child(9).uniform(-0.5, 0.5, 4),
        provenance="random",
    )
    model = assemble_quadratic(feature_map, dataset, zeta_for("2_over_n", 24), rng.child(10))
    eta = 2.5 / lambda_max_symmetric(model.ntk())
    report = quad_update_consistency(model, dataset, eta, steps=50)
    residual = report.max_deviation
    return CheckResult(
        name="update_recursions_pure",
        passed=residual < IDENTITY_TOL,
        residual=residual,
        threshold=IDENTITY_TOL,
    )


def check_update_recursions_with_bias(seed: int = 0) -> CheckResult:
    rng = Rng(seed)
    feature_map = build_meta_features(
        MetaFeatureSpec(n_psi=24, n_phi=6, d=2, eigen_scheme=EigenScheme("pm_one")),
        rng.child(11),
    )
    dataset = Dataset(
        inputs=rng.child(12).uniform(-0.5, 0.5, (4, 2)),
        labels=rng.child(13).uniform(-0.5, 0.5, 4),
        provenance="random",
    )
    model = assemble_quadratic(feature_map, dataset, zeta_for("1_over_n_psi", 24), rng.child(14))
    eta = 2.5 / lambda_max_symmetric(model.ntk())
    report = quad_update_consistency(model, dataset, eta, steps=50)
    recursions = max(report.max_error_deviation, report.max_ntk_deviation)
    overlap = report.max_feature_overlap_deviation
    passed = recursions < IDENTITY_TOL and overlap < OVERLAP_TOL
    return CheckResult(
        name="update_recursions_with_bias",
        passed=passed,
        residual=max(recursions, overlap),
        threshold=OVERLAP_TOL,
        detail=f"recursions={recursions:.3e} feature_overlap={overlap:.3e}",
    )


def check_zero_coupling_kernel_frozen(seed: int = 0) -> CheckResult:
    rng = Rng(seed)
    n = 16
    phi = rng.child(15).normal((4, n))
    model = QuadraticModel(
        theta=rng.child(16).normal(n),
        features=phi,
        meta_features=np.zeros((4, n, n)),
        zeta=0.0,
        variant="with_bias",
    )
    dataset = Dataset(inputs=np.zeros((4, 1)), labels=rng.child(17).normal(4))
    h0 = model.ntk()
    eta = 1.0 / lambda_max_symmetric(h0)
    drift = 0.0
    for _ in range(100):
        z = model.outputs()
        model.apply_gd_step(None, z - dataset.labels, eta)
        step_drift = float(np.abs(model.ntk() - h0).max())
        drift = max(drift, step_drift)
    residual = drift / float(np.abs(h0).max())
    return CheckResult(
        name="zero_coupling_kernel_frozen",
        passed=residual <= FREEZE_TOL,
        residual=residual,
        threshold=FREEZE_TOL,
        detail="static features imply a bit-stable kernel",
    )


def check_linearized_exact_for_linear_model(seed: int = 0) -> CheckResult:
    rng = Rng(seed)
    n, d_pts = 24, 4
    model = QuadraticModel(
        theta=rng.child(18).normal(n),
        features=rng.child(19).normal((d_pts, n)),
        meta_features=np.zeros((d_pts, n, n)),
        zeta=0.0,
        variant="with_bias",
    )
    dataset = Dataset(inputs=np.zeros((d_pts, 1)), labels=rng.child(20).normal(d_pts))
    eta = 0.9 / lambda_max_symmetric(model.ntk())
    # Short horizon: the comparison is only meaningful while the decaying
    # loss stays well above float cancellation noise.
    horizon = 20
    prediction = linearized_predict(model.clone(), dataset, eta, horizon)
    sim = model.clone()
    worst = 0.0
    for t in range(horizon + 1):
        z = sim.outputs()
        true_loss = float(((z - dataset.labels) ** 2).sum()) / (2 * d_pts)
        predicted = prediction.predicted_losses[t]
        worst = max(worst, abs(predicted - true_loss) / max(true_loss, 1e-30))
        sim.apply_gd_step(None, z - dataset.labels, eta)
    return CheckResult(
        name="linearized_predictor_exact_at_zero_coupling",
        passed=worst < IDENTITY_TOL,
        residual=worst,
        threshold=IDENTITY_TOL,
    )


def check_negative_control_corrupted_slope(seed: int = 0) -> CheckResult:
    """Corrupt the gradient's slope convention at exactly-zero preactivations
    and demand the weight-norm identity notices.  The net is built with one
    exact zero in the first layer so the corrupted branch is exercised."""
    rng = Rng(seed).child(21)
    u = rng.normal(32)
    v = rng.normal(32)
    u[0] = 0.0
    v[0] = 2.0
    net = HomogenousNet(u=u, v=v, a_minus=0.0, a_plus=1.0)
    net._grad_zero_slope_override = 1.0  # kernel keeps the halfway convention
    dataset = make_toy()
    eta = 3.0 / float(net.ntk(dataset.inputs)[0, 0])
    traj = train(net, dataset, _identity_config(eta, max_steps=50))
    steps = min(traj.steps_taken, 3) or 1
    residual = float(weight_norm_identity_residuals(traj, "total")[:steps].max())
    return CheckResult(
        name="negative_control_corrupted_zero_slope",
        passed=residual > NEGATIVE_CONTROL_MIN,
        residual=residual,
        threshold=NEGATIVE_CONTROL_MIN,
        detail="the identity must fail when gradient and kernel conventions split",
    )


def run_default_suite(seed: int = 0) -> list[CheckResult]:
    checks = [
        check_pure_quadratic_identity,
        check_homogenous_identity,
        check_relu_reduced_identity,
        check_relu_frozen_complement,
        check_bias_combined_identity,
        check_update_recursions_pure,
        check_update_recursions_with_bias,
        check_zero_coupling_kernel_frozen,
        check_linearized_exact_for_linear_model,
        check_negative_control_corrupted_slope,
    ]
    return [fn(seed) for fn in checks]
