"""Equations of motion in task space via the limb null-space projection.

The tree-topology terms of one limb (platform and its connecting joint
removed) are evaluated from the system matrices of the kinematics module:

    Mbar       = J^T diag(M_k) J,
    Cbar*thd   = J^T ( diag(M_k) Jdot thd - stack(ad(V_k)^T M_k V_k) ),
    Qbar_grav  = -J^T diag(M_k) stack( Ad(C_k)^-1 @ gravity twist ),

with all body quantities in body-fixed frames.  Projection through the
loop null-space basis and through each limb's inverse-kinematics Jacobian
then assembles the manipulator-level terms; the platform contributes its
own Newton-Euler balance.  Inverse dynamics finally maps the task-space
force balance to actuator efforts through the actuation Jacobian.

Coriolis-level quantities are handled as force vectors throughout (never
as factored matrices), which is all the inverse-dynamics path needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .solver import (SingularActuationJacobian, ik_jacobian, limb_jacobians,
                     tree_rates_from_task)


# -- spatial inertia ------------------------------------------------------


def spatial_inertia(mass, inertia, com=(0.0, 0.0, 0.0)):
    """6x6 body-frame mass matrix from mass, rotational inertia about the
    centre of mass, and the centre-of-mass offset."""
    c = np.asarray(com, dtype=float)
    cx = se3.skew(c)
    m = np.zeros((6, 6))
    m[:3, :3] = np.asarray(inertia, dtype=float) + mass * (cx @ cx.T)
    m[:3, 3:] = mass * cx
    m[3:, :3] = mass * cx.T
    m[3:, 3:] = mass * np.eye(3)
    return m


def beam_inertia_square(mass, length, side):
    """Slender beam along the body z-axis with square cross section."""
    ixx = mass * (side**2 + length**2) / 12.0
    return np.diag([ixx, ixx, mass * side**2 / 6.0])


def beam_inertia_circular(mass, length, radius):
    """Beam along the body z-axis with circular cross section."""
    ixx = mass * (3.0 * radius**2 + length**2) / 12.0
    return np.diag([ixx, ixx, mass * radius**2 / 2.0])


def box_inertia(mass, lx, ly, lz):
    """Solid rectangular plate/box, axis-aligned with the body frame."""
    return np.diag([
        mass * (ly**2 + lz**2) / 12.0,
        mass * (lx**2 + lz**2) / 12.0,
        mass * (lx**2 + ly**2) / 12.0,
    ])


def gravity_twist(gravity):
    """Inertial-frame acceleration twist (0; g) of the gravity field."""
    return np.concatenate([np.zeros(3), np.asarray(gravity, dtype=float)])


# -- tree-topology limb terms ---------------------------------------------


@dataclass
class TreeEomTerms:
    """Mass matrix, Coriolis force, gravity and remaining generalized
    forces of a limb's tree-topology system (platform excluded)."""

    M: np.ndarray
    C_force: np.ndarray
    Q_grav: np.ndarray
    Q: np.ndarray


def tree_eom(limb, theta, thetadot, gravity, kev=None):
    """Tree-system terms over the limb's first ``n_bar`` variables.

    Body poses of the retained bodies depend only on these variables, so
    the evaluation may run on the full-limb kinematics and slice.
    """
    kin = limb.kin
    nb = limb.n_bar
    if kev is None:
        kev = kin.evaluate(theta)
    thetadot = np.asarray(thetadot, dtype=float)
    jdot_full = kev.jacobian_dot(thetadot)

    rows = []
    mass_blocks = []
    for body, M_b in sorted(limb.masses.items()):
        i = kin.graph.joint_vars(kin.graph.tree_joint_of[body].joint_id)[-1]
        rows.append(i)
        mass_blocks.append((body, M_b))

    n = nb
    M = np.zeros((n, n))
    C_force = np.zeros(n)
    Q_grav = np.zeros(n)
    a_g = gravity_twist(gravity)
    for i, (body, M_b) in zip(rows, mass_blocks):
        J_b = kev.J[6 * i : 6 * i + 6, :nb]
        Jd_b = jdot_full[6 * i : 6 * i + 6, :nb]
        V_b = J_b @ thetadot[:nb]
        M = M + J_b.T @ M_b @ J_b
        C_force = C_force + J_b.T @ (M_b @ (Jd_b @ thetadot[:nb])
                                     - se3.ad(V_b).T @ (M_b @ V_b))
        U_b = se3.adjoint_inverse(kev.body_pose[body]) @ a_g
        Q_grav = Q_grav - J_b.T @ (M_b @ U_b)
    return TreeEomTerms(M=M, C_force=C_force, Q_grav=Q_grav, Q=np.zeros(n))


@dataclass
class ProjectedEomTerms:
    """Tree terms projected to the limb's independent coordinates."""

    M: np.ndarray
    C_force: np.ndarray
    Q_grav: np.ndarray
    Q: np.ndarray


def limb_eom_project(terms, H_bar, Hdot_bar, qdot):
    """Project tree terms through the null-space basis (virtual power).

    ``H_bar``/``Hdot_bar`` are the row blocks of the limb's H over the
    tree variables retained in ``terms``; the Coriolis contribution picks
    up the extra ``M Hdot qdot`` transport term.
    """
    if H_bar.shape[0] != terms.M.shape[0]:
        raise ValueError("null-space rows do not match the tree variable count")
    Ht = H_bar.T
    return ProjectedEomTerms(
        M=Ht @ terms.M @ H_bar,
        C_force=Ht @ (terms.M @ (Hdot_bar @ qdot) + terms.C_force),
        Q_grav=Ht @ terms.Q_grav,
        Q=Ht @ terms.Q,
    )


# -- platform -------------------------------------------------------------


def platform_newton_euler(M_p, V_p, Vdot_p, C_p, gravity):
    """Newton-Euler balance terms of the platform, platform frame.

    Returns ``(inertial, W_grav)`` with ``inertial = M Vdot - ad(V)^T M V``
    and the gravity wrench already moved to the left-hand side.
    """
    V_p = np.asarray(V_p, dtype=float)
    inertial = M_p @ np.asarray(Vdot_p, dtype=float) - se3.ad(V_p).T @ (M_p @ V_p)
    W_grav = -M_p @ (se3.adjoint_inverse(C_p) @ gravity_twist(gravity))
    return inertial, W_grav


# -- task-space assembly ---------------------------------------------------


@dataclass
class TaskEomTerms:
    """Assembled task-space terms and the actuation Jacobian."""

    M_t: np.ndarray
    C_force: np.ndarray  # C_t @ V_t
    W_grav: np.ndarray
    W: np.ndarray
    W_ee: np.ndarray
    J_ik: np.ndarray


def task_space_eom(pkm, thetas, v_t, vdot_t=None, w_ee=None):
    """Task-space mass, Coriolis-force, gravity and load terms.

    ``thetas`` are the solved limb configurations consistent with one
    platform pose; joint rates are derived from the task velocity.  The
    platform twist is recovered through the task distribution matrix.
    """
    v_t = np.asarray(v_t, dtype=float)
    if vdot_t is None:
        vdot_t = np.zeros_like(v_t)
    dof = pkm.dof
    M_t = np.zeros((dof, dof))
    C_force = np.zeros(dof)
    W_grav = np.zeros(dof)
    W = np.zeros(dof)
    jacs = []
    for limb, theta in zip(pkm.limbs, thetas):
        thetadot, _, jac = tree_rates_from_task(limb, theta, v_t, vdot_t)
        jacs.append(jac)
        nb = limb.n_bar
        kev = limb.kin.evaluate(theta)
        terms = tree_eom(limb, theta, thetadot, pkm.gravity, kev)
        qdot = jac.F @ v_t
        proj = limb_eom_project(terms, jac.H[:nb, :], jac.Hdot[:nb, :], qdot)
        F, Fd = jac.F, jac.F_dot
        M_t = M_t + F.T @ proj.M @ F
        C_force = C_force + F.T @ (proj.C_force + proj.M @ (Fd @ v_t))
        W_grav = W_grav + F.T @ proj.Q_grav
        W = W + F.T @ proj.Q

    # Platform contribution.
    C_p = pkm.limbs[0].platform_pose(thetas[0])
    V_p = pkm.P_p @ v_t
    Vdot_p = pkm.P_p @ vdot_t
    M_p = pkm.platform_inertia
    G_p = -se3.ad(V_p).T
    M_t = M_t + pkm.P_p.T @ M_p @ pkm.P_p
    C_force = C_force + pkm.P_p.T @ (G_p @ (M_p @ V_p))
    _, W_grav_p = platform_newton_euler(M_p, V_p, Vdot_p, C_p, pkm.gravity)
    W_grav = W_grav + pkm.P_p.T @ W_grav_p
    W_ee_t = pkm.P_p.T @ (np.zeros(6) if w_ee is None else np.asarray(w_ee, dtype=float))

    return TaskEomTerms(
        M_t=M_t, C_force=C_force, W_grav=W_grav, W=W, W_ee=W_ee_t,
        J_ik=ik_jacobian(pkm, jacs),
    )


def inverse_dynamics(pkm, thetas, v_t, vdot_t, w_ee=None, terms=None):
    """Actuator efforts realising the prescribed task motion."""
    if terms is None:
        terms = task_space_eom(pkm, thetas, v_t, vdot_t, w_ee)
    rhs = (terms.M_t @ np.asarray(vdot_t, dtype=float) + terms.C_force
           + terms.W_grav + terms.W - terms.W_ee)
    J = terms.J_ik
    if J.shape[0] != J.shape[1]:
        raise SingularActuationJacobian("actuation Jacobian is not square")
    s = np.linalg.svd(J, compute_uv=False)
    if s[-1] / s[0] < 1e-12:
        raise SingularActuationJacobian(
            f"actuation Jacobian is singular (rcond={s[-1] / s[0]:.3e})"
        )
    return np.linalg.solve(J.T, rhs)


# -- energies (reporting and balance checks) -------------------------------


def kinetic_energy(pkm, thetas, thetadots, v_t):
    """Total kinetic energy of all limb bodies and the platform."""
    T = 0.0
    for limb, theta, thetadot in zip(pkm.limbs, thetas, thetadots):
        kev = limb.kin.evaluate(theta)
        for body, M_b in limb.masses.items():
            J_b = kev.body_jacobian(body)
            V_b = J_b @ thetadot
            T += 0.5 * V_b @ (M_b @ V_b)
    V_p = pkm.P_p @ np.asarray(v_t, dtype=float)
    T += 0.5 * V_p @ (pkm.platform_inertia @ V_p)
    return float(T)


def potential_energy(pkm, thetas):
    """Gravitational potential of all bodies (centres of mass at the body
    frame origins, matching the primitive mass models)."""
    g = np.asarray(pkm.gravity, dtype=float)
    U = 0.0
    for limb, theta in zip(pkm.limbs, thetas):
        poses = limb.kin.all_poses(theta)
        for body, M_b in limb.masses.items():
            U -= M_b[3, 3] * g @ poses[body][:3, 3]
    C_p = pkm.limbs[0].platform_pose(thetas[0])
    U -= pkm.platform_inertia[3, 3] * g @ C_p[:3, 3]
    return float(U)
