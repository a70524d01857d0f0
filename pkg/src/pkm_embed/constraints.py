"""Cut-joint loop-closure constraints and their null-space solution.

Each fundamental cycle of a hybrid limb is closed by a cut joint between
bodies ``k`` and ``r``.  Its closure conditions combine elementary
constraints on the relative displacement of two anchor points and on the
perpendicularity of axis pairs fixed to the two bodies:

    position:     g = u_k . d       with d the anchor offset in frame k,
    orientation:  g = u_k . (R_kr u_r).

Differentiating along body twists ``V = (w; v)`` (body-fixed) yields the
constraint Jacobian ``G`` with respect to the cycle's joint variables and
its time derivative ``Gdot``; both are assembled from small operator
matrices acting on the stacked twists of the two bodies.

The velocity constraints ``G thetadot = 0`` are resolved by the
orthogonal complement ``H`` obtained from a dependent/independent
coordinate split ``theta = (y, q)``:

    H rows at y-indices:  -Gy^-1 Gq        (Gy must be regular),
    H rows at q-indices:  identity,

with the closed-form derivative ``Hdot`` used for acceleration-level
resolution.  For loops whose constraints are declared redundant, ``H`` is
instead an SVD null-space basis of the full ``G`` and the identity-row
structure is waived.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import skew


class SingularGy(RuntimeError):
    """Dependent-coordinate block of the constraint Jacobian is singular.

    Signals a loop singularity or an ill-chosen coordinate partition.
    """

    def __init__(self, rcond):
        super().__init__(f"dependent constraint block is singular (rcond={rcond:.3e})")
        self.rcond = rcond


_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class CutJointSpec:
    """Geometry of one cut joint between bodies ``k`` and ``r``.

    Anchors are body-fixed position vectors of the joint's reference
    point; ``position_locks`` are unit directions (frame k) along which
    relative translation is prohibited; each orientation pair
    ``(u_k, u_r)`` keeps a frame-k vector perpendicular to a frame-r
    vector.
    """

    cycle_id: int
    body_k: int
    body_r: int
    anchor_k: tuple[float, float, float]
    anchor_r: tuple[float, float, float]
    position_locks: tuple[tuple[float, float, float], ...] = ()
    orientation_pairs: tuple[
        tuple[tuple[float, float, float], tuple[float, float, float]], ...
    ] = ()

    def __post_init__(self):
        for u in list(self.position_locks) + [p for pair in self.orientation_pairs for p in pair]:
            if abs(np.linalg.norm(u) - 1.0) > _UNIT_TOL:
                raise ValueError("constraint directions must be unit vectors")

    @property
    def n_constraints(self):
        return len(self.position_locks) + len(self.orientation_pairs)


@dataclass
class Displacement:
    """Relative anchor displacement in frame k and its operator matrices.

    ``B`` maps the stacked body-fixed twists (V_k; V_r) to the velocity of
    the displacement; ``A = B @ J`` maps cycle joint rates.  Rate fields
    are filled only when twists were supplied.
    """

    d: np.ndarray
    R_kr: np.ndarray
    B: np.ndarray | None = None
    A: np.ndarray | None = None
    ddot: np.ndarray | None = None
    Bdot: np.ndarray | None = None
    Adot: np.ndarray | None = None
    omega_rel: np.ndarray | None = None  # skew(w_r - w_k), both in frame k


def relative_displacement(spec, C_k, C_r, J_k=None, J_r=None, V_k=None, V_r=None,
                          Jd_k=None, Jd_r=None):
    """Anchor displacement between the cut-joint bodies, with derivatives.

    ``J_k``/``J_r`` are the 6 x n Jacobian blocks of the two bodies with
    columns restricted to the coordinates of interest; twists and Jacobian
    derivatives are needed only for the rate quantities.
    """
    R_k, R_r = C_k[:3, :3], C_r[:3, :3]
    r_k, r_r = C_k[:3, 3], C_r[:3, 3]
    R_kr = R_k.T @ R_r
    d_k = np.asarray(spec.anchor_k, dtype=float)
    d_rk = R_kr @ np.asarray(spec.anchor_r, dtype=float)
    d = d_rk - d_k + R_k.T @ (r_r - r_k)
    disp = Displacement(d=d, R_kr=R_kr)
    if J_k is None:
        return disp

    disp.B = np.hstack([skew(d) + skew(d_k), -np.eye(3), -skew(d_rk) @ R_kr, R_kr])
    J = np.vstack([J_k, J_r])
    disp.A = disp.B @ J
    if V_k is None:
        return disp

    w_k = V_k[:3]
    w_rk = R_kr @ V_r[:3]
    dOm = skew(w_rk - w_k)
    twists = np.concatenate([V_k, V_r])
    disp.ddot = disp.B @ twists
    disp.Bdot = np.hstack([skew(disp.ddot), np.zeros((3, 3)), -dOm @ skew(d_rk) @ R_kr,
                           dOm @ R_kr])
    disp.omega_rel = dOm
    if Jd_k is not None:
        disp.Adot = disp.B @ np.vstack([Jd_k, Jd_r]) + disp.Bdot @ J
    return disp


def position_constraint_rows(spec, disp):
    """Residual, Jacobian and Jacobian-rate rows of the translation locks."""
    if not spec.position_locks:
        n = 0 if disp.A is None else disp.A.shape[1]
        return np.zeros(0), np.zeros((0, n)), None
    U = np.asarray(spec.position_locks, dtype=float)
    g = U @ disp.d
    G = U @ disp.A
    Gdot = None if disp.Adot is None else U @ disp.Adot
    return g, G, Gdot


def _orientation_operators(spec, disp, V_k=None, V_r=None):
    """Per-pair operator matrices of the perpendicularity constraints."""
    ops = []
    for u_k, u_r in spec.orientation_pairs:
        u_k = np.asarray(u_k, dtype=float)
        u_rk = disp.R_kr @ np.asarray(u_r, dtype=float)
        B = np.hstack([skew(u_rk), np.zeros((3, 3)), -skew(u_rk) @ disp.R_kr,
                       np.zeros((3, 3))])
        Bdot = None
        if V_k is not None:
            c = disp.omega_rel @ u_rk
            Bdot = np.hstack([skew(c), np.zeros((3, 3)),
                              -disp.omega_rel @ skew(u_rk) @ disp.R_kr, np.zeros((3, 3))])
        ops.append((u_k, u_rk, B, Bdot))
    return ops


def orientation_constraint_rows(spec, disp, J_k, J_r, V_k=None, V_r=None,
                                Jd_k=None, Jd_r=None):
    """Residual, Jacobian and Jacobian-rate rows of the axis-pair locks."""
    n = J_k.shape[1]
    m = len(spec.orientation_pairs)
    if m == 0:
        return np.zeros(0), np.zeros((0, n)), None
    J = np.vstack([J_k, J_r])
    Jd = None if Jd_k is None else np.vstack([Jd_k, Jd_r])
    g = np.zeros(m)
    G = np.zeros((m, n))
    Gdot = None if Jd is None else np.zeros((m, n))
    for i, (u_k, u_rk, B, Bdot) in enumerate(_orientation_operators(spec, disp, V_k, V_r)):
        g[i] = u_k @ u_rk
        G[i] = u_k @ (B @ J)
        if Gdot is not None:
            Gdot[i] = u_k @ (Bdot @ J + B @ Jd)
    return g, G, Gdot


def orientation_bias_alt(spec, disp, V_k, V_r, jdot_rate_k, jdot_rate_r):
    """Acceleration bias of the orientation rows via the rearranged
    operator that avoids forming the exact ``Bdot``.

    Algebraically equal to ``Gdot @ thetadot`` when applied to the actual
    body twists; exposed separately so the equality can be tested.
    """
    out = np.zeros(len(spec.orientation_pairs))
    twists = np.concatenate([V_k, V_r])
    jrate = np.concatenate([jdot_rate_k, jdot_rate_r])
    w_k = skew(V_k[:3])
    w_rk = skew(disp.R_kr @ V_r[:3])
    for i, (u_k, u_r) in enumerate(spec.orientation_pairs):
        u_k = np.asarray(u_k, dtype=float)
        u_rk = disp.R_kr @ np.asarray(u_r, dtype=float)
        su = skew(u_rk)
        B = np.hstack([su, np.zeros((3, 3)), -su @ disp.R_kr, np.zeros((3, 3))])
        Bbar_dot = -np.hstack([w_k @ su, np.zeros((3, 3)),
                               (w_rk - 2.0 * w_k) @ su @ disp.R_kr, np.zeros((3, 3))])
        out[i] = u_k @ (Bbar_dot @ twists + B @ jrate)
    return out


@dataclass
class ConstraintEval:
    """Stacked constraint data of one cycle: position rows first."""

    g: np.ndarray
    G: np.ndarray
    Gdot: np.ndarray | None = None
    bias: np.ndarray | None = None  # Gdot @ thetadot

    def __post_init__(self):
        if self.G.shape[0] != self.g.shape[0]:
            raise ValueError("Jacobian row count does not match residual length")


def assemble_cycle_constraints(spec, C_k, C_r, J_k, J_r, thetadot=None,
                               Jd_k=None, Jd_r=None):
    """Stack the cut joint's position and orientation rows.

    Columns follow the supplied Jacobian blocks (for intra-limb cycles
    these are the cycle's own joint variables).  With ``thetadot`` and the
    Jacobian derivatives supplied, ``Gdot`` and the acceleration bias
    ``Gdot @ thetadot`` are evaluated as well.
    """
    with_rates = thetadot is not None
    V_k = V_r = None
    if with_rates:
        V_k, V_r = J_k @ thetadot, J_r @ thetadot
    disp = relative_displacement(spec, C_k, C_r, J_k, J_r, V_k, V_r, Jd_k, Jd_r)
    g_p, G_p, Gd_p = position_constraint_rows(spec, disp)
    g_o, G_o, Gd_o = orientation_constraint_rows(spec, disp, J_k, J_r, V_k, V_r, Jd_k, Jd_r)
    ev = ConstraintEval(g=np.concatenate([g_p, g_o]), G=np.vstack([G_p, G_o]))
    if with_rates and Jd_k is not None:
        ev.Gdot = np.vstack([Gd_p, Gd_o]) if Gd_o is not None else Gd_p
        bias_p = np.zeros(0) if Gd_p is None else Gd_p @ thetadot
        bias_o = orientation_bias_alt(spec, disp, V_k, V_r, Jd_k @ thetadot, Jd_r @ thetadot)
        ev.bias = np.concatenate([bias_p, bias_o])
    return ev


@dataclass(frozen=True)
class CyclePartition:
    """Dependent (y) / independent (q) split of a cycle's variables.

    Indices are local to the cycle's variable list; together they must be
    a disjoint, exhaustive cover.
    """

    y_local: tuple[int, ...]
    q_local: tuple[int, ...]

    def __post_init__(self):
        if set(self.y_local) & set(self.q_local):
            raise ValueError("partition indices overlap")


def solve_H(G, partition, rcond_min=1e-12, overconstrained=False, rank_tol=1e-9):
    """Orthogonal complement of a cycle's constraint Jacobian.

    Returns H with rows in the original variable order: the q-rows form an
    identity block, the y-rows hold ``-Gy^-1 Gq``.  In the overconstrained
    mode H is an SVD null-space basis of the full G instead (rank decided
    at ``rank_tol * sigma_max``) and the identity structure is waived.
    """
    n = G.shape[1]
    if overconstrained:
        _, s, vt = np.linalg.svd(G)
        rank = int(np.sum(s > (rank_tol * s[0] if s.size else 0.0)))
        return vt[rank:].T

    y, q = list(partition.y_local), list(partition.q_local)
    if sorted(y + q) != list(range(n)):
        raise ValueError("partition does not cover the cycle variables")
    Gy = G[:, y]
    if Gy.shape[0] != Gy.shape[1]:
        raise ValueError("dependent block must be square (m constraints, m y-vars)")
    if Gy.size:
        s = np.linalg.svd(Gy, compute_uv=False)
        rcond = s[-1] / s[0] if s[0] > 0.0 else 0.0
        if rcond < rcond_min:
            raise SingularGy(rcond)
    H = np.zeros((n, len(q)))
    if y:
        H[y, :] = -np.linalg.solve(Gy, G[:, q])
    H[q, :] = np.eye(len(q))
    return H


def solve_H_dot(G, Gdot, partition, rcond_min=1e-12):
    """Closed-form time derivative of :func:`solve_H` (partitioned form)."""
    n = G.shape[1]
    y, q = list(partition.y_local), list(partition.q_local)
    Gy, Gq = G[:, y], G[:, q]
    Gyd, Gqd = Gdot[:, y], Gdot[:, q]
    if Gy.size:
        s = np.linalg.svd(Gy, compute_uv=False)
        rcond = s[-1] / s[0] if s[0] > 0.0 else 0.0
        if rcond < rcond_min:
            raise SingularGy(rcond)
    Hd = np.zeros((n, len(q)))
    if y:
        Hd[y, :] = np.linalg.solve(Gy, Gyd @ np.linalg.solve(Gy, Gq) - Gqd)
    return Hd


def assemble_limb_H(n_vars, free_indices, cycle_blocks):
    """Combine per-cycle complements into the limb-level H and Hdot.

    ``cycle_blocks`` is a list of ``(var_indices, q_local, H_c, Hdot_c)``
    with ``q_local`` the cycle's independent-variable positions (``None``
    for an SVD-mode block without identity rows).  Column order of the
    result: free variables first, then each cycle's independent
    coordinates in cycle order.  Returns ``(H, Hdot, q_indices)`` where
    ``q_indices`` maps columns to limb variables (``None`` for SVD-mode
    columns).
    """
    n_cols = len(free_indices) + sum(H_c.shape[1] for _, _, H_c, _ in cycle_blocks)
    H = np.zeros((n_vars, n_cols))
    Hdot = np.zeros((n_vars, n_cols))
    q_indices = []
    col = 0
    for i, f in enumerate(free_indices):
        H[f, col + i] = 1.0
        q_indices.append(f)
    col += len(free_indices)
    for var_idx, q_local, H_c, Hdot_c in cycle_blocks:
        nc = H_c.shape[1]
        rows = np.asarray(var_idx, dtype=int)
        H[rows, col : col + nc] = H_c
        if Hdot_c is not None:
            Hdot[rows, col : col + nc] = Hdot_c
        if q_local is None:
            q_indices.extend([None] * nc)
        else:
            q_indices.extend(var_idx[j] for j in q_local)
        col += nc
    return H, Hdot, q_indices
