"""Constraint-embedding solvers for limb and manipulator inverse kinematics.

Three cooperating iterations resolve a limb's configuration:

- the loop-constraint iteration updates one cycle's dependent variables
  by Newton-Raphson until the cut-joint residual is below tolerance;
- the limb inverse-kinematics iteration drives the platform pose to a
  target, re-solving every loop after each update of the independent
  coordinates (nested scheme);
- the compound iteration merges both into a single combined update,
  adequate when all loops are well conditioned.

Velocity/acceleration resolution maps task-space rates to tree-joint
rates through the limb's null-space basis and task Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import constraints as cn
from . import se3
from .se3 import MetricWeights


class SingularTaskJacobian(RuntimeError):
    def __init__(self, rcond):
        super().__init__(f"task Jacobian is singular (rcond={rcond:.3e})")
        self.rcond = rcond


class SingularActuationJacobian(RuntimeError):
    pass


class MaxIterationsExceeded(RuntimeError):
    """Iteration cap hit; carries the best iterate for diagnostics."""

    def __init__(self, what, theta, err_x=np.nan, err_g=np.nan, iterations=0):
        super().__init__(
            f"{what}: no convergence after {iterations} iterations "
            f"(err_x={err_x:.3e}, err_g={err_g:.3e})"
        )
        self.theta = theta
        self.err_x = err_x
        self.err_g = err_g
        self.iterations = iterations


@dataclass(frozen=True)
class IkSettings:
    """Thresholds and caps of the iterative schemes."""

    eps: float = 1e-10
    eps1: float | None = None  # compound scheme: pose error
    eps2: float | None = None  # compound scheme: constraint error
    max_outer: int = 50
    max_inner: int = 50
    metric: MetricWeights = MetricWeights()

    def __post_init__(self):
        for v in (self.eps, self.eps1, self.eps2):
            if v is not None and v <= 0.0:
                raise ValueError("thresholds must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be at least 1")

    @property
    def pose_eps(self):
        return self.eps if self.eps1 is None else self.eps1

    @property
    def loop_eps(self):
        return self.eps if self.eps2 is None else self.eps2


@dataclass
class IkResult:
    theta: np.ndarray
    outer_iterations: int
    inner_iterations: list  # per outer step: list of per-cycle correction counts
    err_x: float
    err_g: float

    @property
    def inner_total(self):
        return sum(sum(step) for step in self.inner_iterations)


@dataclass(frozen=True)
class AnalyticCycleSolution:
    """Closed-form loop solution: a map q -> cycle variables with constant H."""

    psi: object  # callable, (delta_c,) -> (n_c,)
    H: np.ndarray


@dataclass
class CycleModel:
    """One fundamental cycle with its cut-joint data and coordinate split."""

    cycle: object  # topology.FundamentalCycle
    spec: cn.CutJointSpec | None
    partition: cn.CyclePartition
    analytic: AnalyticCycleSolution | None = None
    overconstrained: bool = False

    @property
    def is_newton(self):
        return self.analytic is None

    @property
    def q_global(self):
        return [self.cycle.var_indices[j] for j in self.partition.q_local]


@dataclass
class LimbModel:
    """Everything needed to solve one limb: tree kinematics, loop data,
    task selection and (optionally) the mass model used by dynamics."""

    kin: object  # kinematics.LimbKinematics
    cycles: list
    P_t: np.ndarray  # task selector, rows of the platform twist
    D_t: np.ndarray  # task distribution, maps manipulator task rates to limb task rows
    name: str = "limb"
    masses: dict = field(default_factory=dict)  # body -> 6x6 spatial inertia
    n_bar: int | None = None  # tree variables without the platform joint
    platform_joint_spec: cn.CutJointSpec | None = None  # for external checks
    free_idx: list = field(init=False)
    q_idx: list = field(init=False)

    def __post_init__(self):
        from .topology import free_var_indices

        self.free_idx = free_var_indices(self.kin.graph)
        self.q_idx = list(self.free_idx)
        for cm in self.cycles:
            self.q_idx.extend(cm.q_global)

    @property
    def platform(self):
        return self.kin.graph.platform

    @property
    def n_vars(self):
        return self.kin.n

    @property
    def dof(self):
        return len(self.q_idx)

    def platform_pose(self, theta):
        return self.kin.body_pose(theta, self.platform)


@dataclass
class PkmModel:
    """Assembled manipulator: limbs sharing one platform."""

    limbs: list
    P_p: np.ndarray  # 6 x dof_platform task distribution of the platform twist
    actuated: list  # (limb_index, q_column) per actuator
    platform_inertia: np.ndarray | None = None
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    @property
    def dof(self):
        return self.P_p.shape[1]


# -- small helpers -----------------------------------------------------


def pose_increment(c_current, c_target):
    """First-order twist coordinates of the pose increment, platform frame.

    Extracts the 6-vector of ``inv(C_current) @ C_target - I`` (skew part
    of the rotation block, translation column); exact enough for the
    Newton updates, which only need a consistent first-order error.
    """
    dc = se3.pose_inverse(c_current) @ c_target
    m = dc[:3, :3]
    w = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    return np.concatenate([w, dc[:3, 3]])


def _task_error(limb, kev, c_target):
    return limb.P_t @ pose_increment(kev.body_pose[limb.platform], c_target)


def _task_norm(limb, dx, metric):
    return se3.twist_norm(limb.P_t.T @ dx, metric)


def cycle_constraints(limb, kev, cm, thetadot=None, jdot=None):
    """Cut-joint constraint evaluation of one cycle at a configuration."""
    idx = list(cm.cycle.var_indices)
    spec = cm.spec
    C_k = kev.body_pose[spec.body_k]
    C_r = kev.body_pose[spec.body_r]
    J_k = kev.body_jacobian(spec.body_k)[:, idx]
    J_r = kev.body_jacobian(spec.body_r)[:, idx]
    if thetadot is None:
        return cn.assemble_cycle_constraints(spec, C_k, C_r, J_k, J_r)
    if jdot is None:
        jdot = kev.jacobian_dot(thetadot)
    Jd_k = kev.body_jacobian_dot(thetadot, spec.body_k, jdot)[:, idx]
    Jd_r = kev.body_jacobian_dot(thetadot, spec.body_r, jdot)[:, idx]
    return cn.assemble_cycle_constraints(
        spec, C_k, C_r, J_k, J_r, thetadot[idx], Jd_k, Jd_r
    )


def loop_residual(limb, kev, cm):
    """Euclidean norm of one cycle's closure residual."""
    if not cm.is_newton:
        idx = list(cm.cycle.var_indices)
        th = kev.theta[idx]
        q = th[list(cm.partition.q_local)]
        return float(np.linalg.norm(th - cm.analytic.psi(q)))
    return float(np.linalg.norm(cycle_constraints(limb, kev, cm).g))


def max_loop_residual(limb, kev):
    return max((loop_residual(limb, kev, cm) for cm in limb.cycles), default=0.0)


def limb_nullspace(limb, kev, thetadot=None, jdot=None):
    """Limb-level H (and Hdot when rates are given) at a configuration."""
    blocks = []
    for cm in limb.cycles:
        if not cm.is_newton:
            H_c = cm.analytic.H
            Hd_c = np.zeros_like(H_c)
        else:
            if thetadot is None:
                ev = cycle_constraints(limb, kev, cm)
                H_c = cn.solve_H(ev.G, cm.partition, overconstrained=cm.overconstrained)
                Hd_c = None
            else:
                ev = cycle_constraints(limb, kev, cm, thetadot, jdot)
                H_c = cn.solve_H(ev.G, cm.partition, overconstrained=cm.overconstrained)
                Hd_c = cn.solve_H_dot(ev.G, ev.Gdot, cm.partition)
        q_local = None if cm.overconstrained else cm.partition.q_local
        blocks.append((list(cm.cycle.var_indices), q_local, H_c, Hd_c))
    return cn.assemble_limb_H(limb.n_vars, limb.free_idx, blocks)


def _task_jacobian(limb, kev, H):
    L_p = kev.body_jacobian(limb.platform) @ H
    L_t = limb.P_t @ L_p
    s = np.linalg.svd(L_t, compute_uv=False)
    rcond = s[-1] / s[0] if s[0] > 0.0 else 0.0
    if rcond < 1e-12:
        raise SingularTaskJacobian(rcond)
    return L_p, L_t


# -- loop-constraint iteration (inner) ---------------------------------


def solve_loop_constraints(limb, cycle_index, theta, dq, settings=IkSettings(),
                           kev0=None, ev0=None):
    """Advance one cycle's independent coordinates by ``dq`` and restore
    closure by Newton-Raphson on the dependent coordinates.

    The independent components end up at exactly their previous value
    plus ``dq``.  Returns ``(theta_new, corrections)``; a nonzero step is
    always followed by at least one correction pass so the residual is
    verified at the new point.  ``kev0``/``ev0`` may carry an evaluation
    made at a configuration whose cycle variables match ``theta`` (cycle
    constraints are local, so changes to other cycles' variables do not
    invalidate them).
    """
    cm = limb.cycles[cycle_index]
    idx = list(cm.cycle.var_indices)
    theta = np.array(theta, dtype=float)
    dq = np.asarray(dq, dtype=float)

    if not cm.is_newton:
        q_new = theta[[idx[j] for j in cm.partition.q_local]] + dq
        theta[idx] = cm.analytic.psi(q_new)
        return theta, 0

    y_rows = [idx[j] for j in cm.partition.y_local]
    q_rows = [idx[j] for j in cm.partition.q_local]
    eps = settings.loop_eps

    if ev0 is None:
        if kev0 is None or np.any(kev0.theta[idx] != theta[idx]):
            kev0 = limb.kin.evaluate(theta)
        ev0 = cycle_constraints(limb, kev0, cm)
    ev = ev0
    Gy = ev.G[:, list(cm.partition.y_local)]
    Gq = ev.G[:, list(cm.partition.q_local)]
    _check_gy(Gy)
    theta[q_rows] += dq
    theta[y_rows] += -np.linalg.solve(Gy, Gq @ dq)

    force = bool(np.any(dq != 0.0))
    corrections = 0
    while True:
        ev = cycle_constraints(limb, limb.kin.evaluate(theta), cm)
        err = np.linalg.norm(ev.g)
        if err <= eps and (corrections >= 1 or not force):
            break
        if corrections >= settings.max_inner:
            raise MaxIterationsExceeded(
                f"loop constraints of cycle {cm.cycle.cycle_id}",
                theta, err_g=err, iterations=corrections,
            )
        Gy = ev.G[:, list(cm.partition.y_local)]
        _check_gy(Gy)
        theta[y_rows] += -np.linalg.solve(Gy, ev.g)
        corrections += 1
    return theta, corrections


def _check_gy(Gy):
    s = np.linalg.svd(Gy, compute_uv=False)
    rcond = s[-1] / s[0] if s[0] > 0.0 else 0.0
    if rcond < 1e-12:
        raise cn.SingularGy(rcond)


# -- limb inverse kinematics (outer, nested) ----------------------------


def solve_limb_ik(limb, theta0, c_target, settings=IkSettings()):
    """Nested scheme: Newton on the independent coordinates, with every
    loop re-solved to tolerance inside each step.

    ``theta0`` must be an admissible configuration; the returned branch is
    the one connected to it.
    """
    _reject_overconstrained(limb)
    theta = np.array(theta0, dtype=float)
    kev = limb.kin.evaluate(theta)
    dx = _task_error(limb, kev, c_target)
    outer = 0
    inner = []
    while _task_norm(limb, dx, settings.metric) > settings.pose_eps:
        if outer >= settings.max_outer:
            raise MaxIterationsExceeded(
                "limb inverse kinematics (nested)", theta,
                err_x=_task_norm(limb, dx, settings.metric),
                err_g=max_loop_residual(limb, kev), iterations=outer,
            )
        evs = {}
        blocks = []
        for ci, cm in enumerate(limb.cycles):
            if cm.is_newton:
                ev = cycle_constraints(limb, kev, cm)
                evs[ci] = ev
                H_c = cn.solve_H(ev.G, cm.partition)
            else:
                H_c = cm.analytic.H
            blocks.append((list(cm.cycle.var_indices), cm.partition.q_local, H_c, None))
        H, _, _ = cn.assemble_limb_H(limb.n_vars, limb.free_idx, blocks)
        _, L_t = _task_jacobian(limb, kev, H)
        dq = np.linalg.solve(L_t, dx)
        counts = []
        col = len(limb.free_idx)
        for ci, cm in enumerate(limb.cycles):
            nc = len(cm.q_global)
            theta, n_corr = solve_loop_constraints(
                limb, ci, theta, dq[col : col + nc], settings, ev0=evs.get(ci)
            )
            counts.append(n_corr)
            col += nc
        for pos, f in enumerate(limb.free_idx):
            theta[f] += dq[pos]
        inner.append(counts)
        outer += 1
        kev = limb.kin.evaluate(theta)
        dx = _task_error(limb, kev, c_target)
    return IkResult(
        theta=theta,
        outer_iterations=outer,
        inner_iterations=inner,
        err_x=_task_norm(limb, dx, settings.metric),
        err_g=max_loop_residual(limb, kev),
    )


def _reject_overconstrained(limb):
    # The position-level schemes need the partitioned (identity-row) H;
    # SVD-mode loops are supported at velocity level only.
    if any(cm.overconstrained for cm in limb.cycles):
        raise NotImplementedError(
            "position-level inverse kinematics requires partitioned loop "
            "coordinates; declare a full-rank constraint subset instead"
        )


# -- compound scheme -----------------------------------------------------


def solve_limb_ik_compound(limb, theta0, c_target, settings=IkSettings()):
    """Compound scheme: one combined tree-variable update per iteration,
    terminating when both the pose and the loop residuals are below their
    thresholds.  Assumes well-conditioned loops.

    Each update is the null-space step of the nested scheme plus one
    Newton correction of every loop residual (one inner-iteration step
    folded into the outer step); without the correction component the
    loop residual could never be driven below its drift level.
    """
    _reject_overconstrained(limb)
    theta = np.array(theta0, dtype=float)
    kev = limb.kin.evaluate(theta)
    dx = _task_error(limb, kev, c_target)
    err_g = max_loop_residual(limb, kev)
    iterations = 0
    while (_task_norm(limb, dx, settings.metric) > settings.pose_eps
           or err_g > settings.loop_eps):
        if iterations >= settings.max_outer:
            raise MaxIterationsExceeded(
                "limb inverse kinematics (compound)", theta,
                err_x=_task_norm(limb, dx, settings.metric),
                err_g=err_g, iterations=iterations,
            )
        evs = {}
        blocks = []
        for ci, cm in enumerate(limb.cycles):
            if cm.is_newton:
                ev = cycle_constraints(limb, kev, cm)
                evs[ci] = ev
                H_c = cn.solve_H(ev.G, cm.partition, overconstrained=False)
            else:
                H_c = cm.analytic.H
            blocks.append((list(cm.cycle.var_indices), cm.partition.q_local, H_c, None))
        H, _, _ = cn.assemble_limb_H(limb.n_vars, limb.free_idx, blocks)
        _, L_t = _task_jacobian(limb, kev, H)
        dtheta = H @ np.linalg.solve(L_t, dx)
        for ci, ev in evs.items():
            cm = limb.cycles[ci]
            idx = list(cm.cycle.var_indices)
            Gy = ev.G[:, list(cm.partition.y_local)]
            _check_gy(Gy)
            y_rows = [idx[j] for j in cm.partition.y_local]
            dtheta[y_rows] += -np.linalg.solve(Gy, ev.g)
        theta = theta + dtheta
        kev = limb.kin.evaluate(theta)
        dx = _task_error(limb, kev, c_target)
        err_g = max_loop_residual(limb, kev)
        iterations += 1
    return IkResult(
        theta=theta,
        outer_iterations=iterations,
        inner_iterations=[[1] * len(limb.cycles) for _ in range(iterations)],
        err_x=_task_norm(limb, dx, settings.metric),
        err_g=err_g,
    )


# -- velocity / acceleration resolution ---------------------------------


@dataclass
class LimbJacobians:
    """Forward/task/inverse kinematics Jacobians of one limb (with rates
    when joint velocities were supplied)."""

    H: np.ndarray
    L_p: np.ndarray
    L_t: np.ndarray
    F: np.ndarray
    Hdot: np.ndarray | None = None
    L_p_dot: np.ndarray | None = None
    L_t_dot: np.ndarray | None = None
    F_dot: np.ndarray | None = None

    def cond_sqrt(self):
        """Conditioning measure sqrt(kappa(F^T F)) of the limb."""
        s = np.linalg.svd(self.F, compute_uv=False)
        return float(s[0] / s[-1]) if s[-1] > 0.0 else np.inf


def limb_jacobians(limb, theta, thetadot=None, kev=None):
    if kev is None:
        kev = limb.kin.evaluate(theta)
    if thetadot is None:
        H, _, _ = limb_nullspace(limb, kev)
        L_p, L_t = _task_jacobian(limb, kev, H)
        return LimbJacobians(H=H, L_p=L_p, L_t=L_t, F=np.linalg.solve(L_t, limb.D_t))
    thetadot = np.asarray(thetadot, dtype=float)
    jdot = kev.jacobian_dot(thetadot)
    H, Hdot, _ = limb_nullspace(limb, kev, thetadot, jdot)
    L_p, L_t = _task_jacobian(limb, kev, H)
    J_p = kev.body_jacobian(limb.platform)
    Jd_p = kev.body_jacobian_dot(thetadot, limb.platform, jdot)
    L_p_dot = Jd_p @ H + J_p @ Hdot
    L_t_dot = limb.P_t @ L_p_dot
    F = np.linalg.solve(L_t, limb.D_t)
    F_dot = -np.linalg.solve(L_t, L_t_dot @ F)
    return LimbJacobians(H, L_p, L_t, F, Hdot, L_p_dot, L_t_dot, F_dot)


def tree_rates_from_task(limb, theta, v_t, vdot_t, kev=None):
    """Tree-joint velocities and accelerations for given task rates.

    Two-stage evaluation at one configuration: the velocity solution fixes
    ``thetadot``, which then enters the Jacobian rates needed for the
    accelerations.
    """
    v_t = np.asarray(v_t, dtype=float)
    vdot_t = np.asarray(vdot_t, dtype=float)
    if kev is None:
        kev = limb.kin.evaluate(theta)
    jac0 = limb_jacobians(limb, theta, kev=kev)
    qdot = jac0.F @ v_t
    thetadot = jac0.H @ qdot
    jac = limb_jacobians(limb, theta, thetadot, kev=kev)
    thetaddot = jac.H @ (jac.F @ vdot_t) + (jac.Hdot - jac.H @ np.linalg.solve(
        jac.L_t, jac.L_t_dot)) @ qdot
    return thetadot, thetaddot, jac


# -- manipulator-level inverse kinematics --------------------------------


@dataclass
class LimbStepRecord:
    theta: np.ndarray
    thetadot: np.ndarray
    thetaddot: np.ndarray
    outer: int
    inner: list
    err_x: float
    err_g: float
    jac: LimbJacobians


@dataclass
class PkmStepRecord:
    t: float
    limbs: list  # LimbStepRecord per limb
    J_ik: np.ndarray


class SolverStepError(RuntimeError):
    """Wraps a solver failure with trajectory-step context."""

    def __init__(self, step, limb_index, cause):
        super().__init__(f"step {step}, limb {limb_index}: {cause}")
        self.step = step
        self.limb_index = limb_index
        self.cause = cause


def ik_jacobian(pkm, limb_jacs):
    """Actuator rows of the limbs' inverse-kinematics Jacobians."""
    rows = [limb_jacs[li].F[col, :] for li, col in pkm.actuated]
    return np.vstack(rows)


def pkm_inverse_kinematics(pkm, theta0_list, samples, settings=IkSettings(),
                           method="nested"):
    """Warm-started inverse kinematics along a sampled platform trajectory.

    ``samples`` is a sequence of ``(t, C_p, V_t, Vdot_t)``.  Each limb is
    solved independently per sample, warm-started from the previous one;
    tree rates follow from the task rates.  Returns one record per sample.
    """
    solve = solve_limb_ik if method == "nested" else solve_limb_ik_compound
    thetas = [np.array(th, dtype=float) for th in theta0_list]
    records = []
    for step, (t, c_p, v_t, vdot_t) in enumerate(samples):
        limb_records = []
        for li, limb in enumerate(pkm.limbs):
            try:
                res = solve(limb, thetas[li], c_p, settings)
                thetadot, thetaddot, jac = tree_rates_from_task(
                    limb, res.theta, v_t, vdot_t
                )
            except (cn.SingularGy, SingularTaskJacobian, MaxIterationsExceeded) as e:
                err = SolverStepError(step, li, e)
                err.partial = records
                raise err from e
            thetas[li] = res.theta
            limb_records.append(LimbStepRecord(
                theta=res.theta, thetadot=thetadot, thetaddot=thetaddot,
                outer=res.outer_iterations, inner=res.inner_iterations,
                err_x=res.err_x, err_g=res.err_g, jac=jac,
            ))
        records.append(PkmStepRecord(
            t=t, limbs=limb_records,
            J_ik=ik_jacobian(pkm, [lr.jac for lr in limb_records]),
        ))
    return records
