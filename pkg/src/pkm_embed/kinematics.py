"""Tree-topology forward kinematics and system Jacobians of one limb.

Forward kinematics uses the product of exponentials over the spatial
joint screws at the zero reference,

    C_k(theta) = exp(theta_a Y_a) ... exp(theta_k Y_k) A_k,

taking only the variables on the path from ground to body k.  Velocity
kinematics is organised per scalar variable: variable i is given a frame
(the reference frame of the body it drives), and the stacked 6n x n
system Jacobian J maps joint rates to the body-fixed twists of these
per-variable frames.  J factorises as A_sys @ X_sys with block-triangular
A_sys (adjoints of relative poses, zero when the column is not a
predecessor) and block-diagonal X_sys (body-frame screws), and its time
derivative has the closed form

    Jdot = -A_sys @ blockdiag(thetadot_i * ad(X_i)) @ J.

A physical body's Jacobian is the row block of its joint's last variable.
"""

from __future__ import annotations

import numpy as np

from . import se3


class UnknownBody(KeyError):
    pass


class _ScrewExp:
    """Precomputed factors for fast evaluation of exp(theta * Y).

    Valid for unit-axis rotational screws and pure translations; generic
    screws fall back to the closed form in :mod:`se3`.
    """

    def __init__(self, y):
        self.y = np.asarray(y, dtype=float)
        w, v = self.y[:3], self.y[3:]
        wnorm = np.linalg.norm(w)
        self.kind = "zero"
        if wnorm > 0.0:
            self.kind = "unit" if abs(wnorm - 1.0) < 1e-12 else "generic"
            W = se3.skew(w)
            self.W = W
            self.W2 = W @ W
            self.v = v
            self.Wv = W @ v
            self.W2v = self.W2 @ v
        else:
            self.v = v

    _EYE4 = np.eye(4)

    def pose(self, theta):
        if self.kind == "zero":
            out = self._EYE4.copy()
            out[:3, 3] = theta * self.v
            return out
        if self.kind == "generic":
            return se3.exp_se3(self.y, theta)
        s, c = np.sin(theta), np.cos(theta)
        out = self._EYE4.copy()
        out[:3, :3] += s * self.W + (1.0 - c) * self.W2
        out[:3, 3] = theta * self.v + (1.0 - c) * self.Wv + (theta - s) * self.W2v
        return out


class LimbKinematics:
    """Screws and reference data of one limb, ready for evaluation.

    Parameters
    ----------
    graph : topology.LimbGraph
    screws : (n_vars, 6) spatial joint screws at the zero reference.
    ref_poses : dict body -> 4x4 zero-reference pose (bodies 1..n_bodies).
    """

    def __init__(self, graph, screws, ref_poses):
        screws = np.asarray(screws, dtype=float)
        if screws.shape != (graph.n_vars, 6):
            raise ValueError("screw table does not match the variable count")
        self.graph = graph
        self.n = graph.n_vars
        self.Y = screws
        self.A = {b: np.array(ref_poses[b], dtype=float) for b in range(1, graph.n_bodies + 1)}
        self._exp = [_ScrewExp(y) for y in screws]

        # Per-variable bookkeeping: owning body and chain of predecessor vars.
        self.var_body = np.zeros(self.n, dtype=int)
        body_chain = {0: []}
        for body in range(1, graph.n_bodies + 1):
            j = graph.tree_joint_of[body]
            own = graph.joint_vars(j.joint_id)
            for i in own:
                self.var_body[i] = body
            body_chain[body] = body_chain[graph.parent[body]] + own
        self.chain = body_chain
        # pred[i] = ordered variable indices up to and including i
        self.pred = [None] * self.n
        for body in range(1, graph.n_bodies + 1):
            ch = body_chain[body]
            for pos, i in enumerate(ch):
                if self.var_body[i] == body:
                    self.pred[i] = ch[: pos + 1]
        # Last variable of each body's joint (its Jacobian row block).
        self.body_row = {
            b: graph.joint_vars(graph.tree_joint_of[b].joint_id)[-1]
            for b in range(1, graph.n_bodies + 1)
        }
        # Body-frame screws of the per-variable frames.
        self.X = np.stack(
            [se3.adjoint_inverse(self.A[self.var_body[i]]) @ self.Y[i] for i in range(self.n)]
        )
        self.adX = [se3.ad(self.X[i]) for i in range(self.n)]

    # -- poses ---------------------------------------------------------

    def body_pose(self, theta, body):
        """Pose of one body; touches only its predecessor variables."""
        if body == 0:
            return np.eye(4)
        if body not in self.A:
            raise UnknownBody(body)
        f = np.eye(4)
        for i in self.chain[body]:
            f = f @ self._exp[i].pose(theta[i])
        return f @ self.A[body]

    def all_poses(self, theta):
        """Poses of every moving body, each joint exponential evaluated once."""
        prefix = {0: np.eye(4)}
        poses = {}
        for body in range(1, self.graph.n_bodies + 1):
            f = prefix[self.graph.parent[body]]
            for i in self.graph.joint_vars(self.graph.tree_joint_of[body].joint_id):
                f = f @ self._exp[i].pose(theta[i])
            prefix[body] = f
            poses[body] = f @ self.A[body]
        return poses

    # -- velocity kinematics --------------------------------------------

    def evaluate(self, theta):
        """Full kinematic evaluation at one configuration."""
        return KinEval(self, np.asarray(theta, dtype=float))


class KinEval:
    """Poses, spatial screws and system Jacobian at a fixed configuration.

    Jacobian row blocks are assembled lazily per body and cached; the
    dense stacked form is built on first access.
    """

    def __init__(self, kin, theta):
        self.kin = kin
        self.theta = theta
        n = kin.n
        graph = kin.graph

        # Sweep the tree once: prefix products and per-variable data.
        prefix_body = {0: np.eye(4)}
        self.S = np.zeros((n, 6))  # spatial screws at theta
        self.frame = np.zeros((n, 4, 4))  # per-variable frame poses
        self.body_pose = {}
        for body in range(1, graph.n_bodies + 1):
            f = prefix_body[graph.parent[body]]
            a_body = kin.A[body]
            for i in graph.joint_vars(graph.tree_joint_of[body].joint_id):
                r = f[:3, :3]
                y = kin.Y[i]
                w = r @ y[:3]
                p = f[:3, 3]
                self.S[i, :3] = w
                m = r @ y[3:]
                m[0] += p[1] * w[2] - p[2] * w[1]
                m[1] += p[2] * w[0] - p[0] * w[2]
                m[2] += p[0] * w[1] - p[1] * w[0]
                self.S[i, 3:] = m
                f = f @ kin._exp[i].pose(theta[i])
                self.frame[i] = f @ a_body
            prefix_body[body] = f
            self.body_pose[body] = self.frame[kin.body_row[body]]

        self._rows = {}
        self._J = None
        self._A_sys = None

    def _var_rows(self, i):
        """6 x n Jacobian block of variable frame i."""
        rows = self._rows.get(i)
        if rows is None:
            rows = np.zeros((6, self.kin.n))
            adinv = se3.adjoint_inverse(self.frame[i])
            pred = self.kin.pred[i]
            rows[:, pred] = adinv @ self.S[pred].T
            self._rows[i] = rows
        return rows

    @property
    def J(self):
        if self._J is None:
            n = self.kin.n
            j = np.zeros((6 * n, n))
            for i in range(n):
                j[6 * i : 6 * i + 6, :] = self._var_rows(i)
            self._J = j
        return self._J

    # -- factorisation --------------------------------------------------

    @property
    def A_sys(self):
        """Dense block-triangular adjoint matrix of the factorisation."""
        if self._A_sys is None:
            n = self.kin.n
            a = np.zeros((6 * n, 6 * n))
            for i in range(n):
                inv_i = se3.pose_inverse(self.frame[i])
                for j in self.kin.pred[i]:
                    a[6 * i : 6 * i + 6, 6 * j : 6 * j + 6] = se3.adjoint(
                        inv_i @ self.frame[j]
                    )
            self._A_sys = a
        return self._A_sys

    @property
    def X_sys(self):
        n = self.kin.n
        x = np.zeros((6 * n, n))
        for i in range(n):
            x[6 * i : 6 * i + 6, i] = self.kin.X[i]
        return x

    def body_jacobian(self, body):
        """6 x n body-fixed Jacobian of a physical body."""
        if body == 0:
            return np.zeros((6, self.kin.n))
        return self._var_rows(self.kin.body_row[body])

    def jacobian_dot(self, thetadot):
        """Closed-form time derivative of the system Jacobian."""
        n = self.kin.n
        J = self.J
        aj = np.zeros((6 * n, n))
        for i in range(n):
            aj[6 * i : 6 * i + 6, :] = thetadot[i] * (self.kin.adX[i] @ J[6 * i : 6 * i + 6, :])
        return -self.A_sys @ aj

    def body_jacobian_dot(self, thetadot, body, jdot=None):
        if jdot is None:
            jdot = self.jacobian_dot(thetadot)
        i = self.kin.body_row[body]
        return jdot[6 * i : 6 * i + 6, :]

    def system_motion(self, thetadot, thetaddot):
        """Stacked body twists and accelerations of all variable frames."""
        jdot = self.jacobian_dot(thetadot)
        v = self.J @ thetadot
        vdot = self.J @ thetaddot + jdot @ thetadot
        return v, vdot


# Functional wrappers matching the operation-level API.

def body_pose(kin, theta, body):
    return kin.body_pose(theta, body)


def all_poses(kin, theta):
    return kin.all_poses(theta)


def system_jacobian(kin, theta):
    return kin.evaluate(theta)


def jacobian_dot(kin, theta, thetadot):
    return kin.evaluate(theta).jacobian_dot(np.asarray(thetadot, dtype=float))


def system_motion(kin, theta, thetadot, thetaddot):
    ev = kin.evaluate(theta)
    return ev.system_motion(np.asarray(thetadot, dtype=float), np.asarray(thetaddot, dtype=float))
