"""IRSBot-2 reference model: geometry, loops, masses and experiments.

The robot has two congruent limbs (mirrored through the y-z plane of the
base frame), each a serial arrangement of a planar parallelogram
(proximal loop, revolute cut joint) and a spatial two-rod module (distal
loop, universal cut joint).  The platform translates in the x-z plane;
its y-translation and all rotations are suppressed by the interplay of
the two limbs.

Geometry constants are chosen so that the zero configuration is an exact
assembly and the platform reference height has the closed form

    h0 = c3 + d3 + P3 + L1*cos(phi0) + L2*cos(psi0).

The inertial model uses simple geometric primitives (aluminium density);
primitive dimensions are kept as a separate parameter set because the
published masses correspond to a smaller build than the kinematic
workspace used in the motion studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constraints as cn
from . import dynamics as dyn
from . import se3, solver
from .kinematics import LimbKinematics
from .topology import Joint, JointKind, build_limb_graph


class ModelError(ValueError):
    pass


# -- parameters -------------------------------------------------------------


@dataclass(frozen=True)
class IrsbotParams:
    """Geometric constants of one limb (metres / radians).

    ``a``: base half-spacing of the actuated joints; ``b``: parallelogram
    coupler edge; ``c/d``: elbow offsets; ``L1``/``L2``: proximal and
    distal link lengths; ``P1..P3``: platform anchor offsets; ``alpha``:
    elbow tilt; ``phi0``: proximal reference angle.
    """

    a: float = 1.0 / 8.0
    b: float = 1.0 / 6.0
    L1: float = 1.0 / 2.0
    L2: float = 3.0 / 4.0
    alpha: float = math.pi / 6.0
    phi0: float = math.pi / 4.0
    P1: float = 1.0 / 16.0  # a/2
    P2: float = 1.0 / 16.0  # d2/2
    P3: float = 0.0
    # Filled from the standard relations when left as None.
    c1: float | None = None
    c3: float | None = None
    d1: float | None = None
    d2: float | None = None
    d3: float | None = None

    def __post_init__(self):
        b1 = self.b * math.cos(self.alpha)
        b3 = self.b * math.sin(self.alpha)
        defaults = {"c1": b1 / 2.0, "c3": b3, "d1": b1 / 2.0, "d2": self.a, "d3": b3}
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.L2**2 <= (self.d2 - self.P2) ** 2 + self.u**2:
            raise ModelError("distal rods too short to close the loop")

    @property
    def b1(self):
        return self.b * math.cos(self.alpha)

    @property
    def b3(self):
        return self.b * math.sin(self.alpha)

    @property
    def e1(self):
        return self.b1 - self.c1

    @property
    def e3(self):
        return self.b3 + self.c3

    @property
    def u(self):
        return self.a + self.c1 + self.d1 - self.P1 + self.L1 * math.sin(self.phi0)

    @property
    def beta(self):
        return math.atan2(self.d2 - self.P2, self.u)

    @property
    def psi0(self):
        return math.asin(math.hypot(self.d2 - self.P2, self.u) / self.L2)

    @property
    def h0(self):
        """Depth of the platform frame below ground at zero configuration."""
        return (self.c3 + self.d3 + self.P3 + self.L1 * math.cos(self.phi0)
                + self.L2 * math.cos(self.psi0))


def default_params():
    return IrsbotParams()


def reference_platform_height():
    """Closed-form h0 of the default geometry (positive depth, metres)."""
    r2, r3, r6 = math.sqrt(2.0), math.sqrt(3.0), math.sqrt(6.0)
    return (4.0 + 6.0 * r2 + math.sqrt(6.0 * (37.0 - 6.0 * r2 - 2.0 * r3 - 4.0 * r6))) / 24.0


# -- mass model --------------------------------------------------------------


@dataclass(frozen=True)
class MassDims:
    """Primitive dimensions of the inertial model (metres).

    These reproduce the published masses at aluminium density; they belong
    to a smaller build than the default kinematic geometry and are kept
    independent of :class:`IrsbotParams`.
    """

    beam1_length: float = 0.25
    beam1_side: float = 0.25 / 6.0
    beam3_length: float = 0.25
    beam3_side: float = 0.025
    plate2_x: float = 2.0 * (1.0 / 12.0) * math.cos(math.pi / 6.0)
    plate2_y: float = 0.25
    plate2_z: float = 2.0 * (1.0 / 12.0) * math.sin(math.pi / 6.0)
    rod_length: float = 0.5
    rod_radius: float = 0.5 / 30.0
    platform_x: float = 0.25
    platform_y: float = 0.1875
    platform_z: float = 0.0625 / 4.0
    density: float = 2700.0


OFFICIAL_MASSES = {1: 1.17188, 2: 8.11899, 3: 21.1875, 4: 1.1781, 5: 1.1781, 6: 1.97754}


@dataclass(frozen=True)
class BodyPrimitive:
    body: int
    shape: str
    computed_mass: float
    mass: float
    inertia: np.ndarray  # 3x3 about the centre of mass


@dataclass(frozen=True)
class MassModel:
    bodies: tuple
    density: float

    def spatial(self, body):
        p = next(b for b in self.bodies if b.body == body)
        return dyn.spatial_inertia(p.mass, p.inertia)


def default_mass_model(dims=MassDims()):
    """Primitive-based inertias with masses pinned to the published list.

    Each primitive is centred at its body frame with the long axis along
    body z (beams/rods) or axis-aligned (plates).  Inertia tensors are
    scaled to the official mass, which matters only for body 3 whose
    published mass is far heavier than its stated primitive.
    """
    rho = dims.density

    def entry(body, shape, volume, inertia_fn):
        m_comp = rho * volume
        m_off = OFFICIAL_MASSES[body]
        return BodyPrimitive(body, shape, m_comp, m_off, inertia_fn(m_off))

    bodies = (
        entry(1, "beam-square", dims.beam1_length * dims.beam1_side**2,
              lambda m: dyn.beam_inertia_square(m, dims.beam1_length, dims.beam1_side)),
        entry(2, "plate", dims.plate2_x * dims.plate2_y * dims.plate2_z,
              lambda m: dyn.box_inertia(m, dims.plate2_x, dims.plate2_y, dims.plate2_z)),
        entry(3, "beam-square", dims.beam3_length * dims.beam3_side**2,
              lambda m: dyn.beam_inertia_square(m, dims.beam3_length, dims.beam3_side)),
        entry(4, "beam-circular", dims.rod_length * math.pi * dims.rod_radius**2,
              lambda m: dyn.beam_inertia_circular(m, dims.rod_length, dims.rod_radius)),
        entry(5, "beam-circular", dims.rod_length * math.pi * dims.rod_radius**2,
              lambda m: dyn.beam_inertia_circular(m, dims.rod_length, dims.rod_radius)),
        entry(6, "plate", dims.platform_x * dims.platform_y * dims.platform_z,
              lambda m: dyn.box_inertia(m, dims.platform_x, dims.platform_y, dims.platform_z)),
    )
    return MassModel(bodies=bodies, density=rho)


# -- limb geometry -----------------------------------------------------------


@dataclass
class _LimbData:
    screws: np.ndarray  # (9, 6)
    ref_poses: dict  # body -> 4x4
    distal_spec_args: dict
    proximal_anchor: np.ndarray  # cut-joint point of the parallelogram, world
    attach_spec_args: dict  # platform joint treated as a cut (oracle use)


def _limb_geometry(p):
    """Joint screws and reference poses of the right (+x) limb."""
    sph, cph = math.sin(p.phi0), math.cos(p.phi0)
    sb, cb = math.sin(p.beta), math.cos(p.beta)
    sps, cps = math.sin(p.psi0), math.cos(p.psi0)
    x4 = p.a + p.c1 + p.d1 + p.L1 * sph
    z4 = -(p.c3 + p.d3) - p.L1 * cph
    z6 = z4 - p.L2 * cps

    e_y = np.array([0.0, 1.0, 0.0])
    e41 = np.array([sb, cb, 0.0])
    e42 = np.array([cb * cps, -sb * cps, sps])
    e51 = np.array([-sb, cb, 0.0])
    e52 = np.array([cb * cps, sb * cps, sps])
    e61 = e42
    e62 = np.array([sb, cb, 0.0])

    y1 = np.array([p.a, 0.0, 0.0])
    y2 = np.array([p.a + p.L1 * sph, 0.0, -p.L1 * cph])
    y3 = np.array([p.a + p.b1, 0.0, p.b3])
    y4 = np.array([x4, -p.d2, z4])
    y5 = np.array([x4, p.d2, z4])
    y6 = np.array([p.P1, -p.P2, z6])

    screws = np.stack([
        se3.revolute_screw(y1, e_y),
        se3.revolute_screw(y2, e_y),
        se3.revolute_screw(y3, e_y),
        se3.revolute_screw(y4, e41),
        se3.revolute_screw(y4, e42),
        se3.revolute_screw(y5, e51),
        se3.revolute_screw(y5, e52),
        se3.revolute_screw(y6, e61),
        se3.revolute_screw(y6, e62),
    ])

    rot_y = se3.rot_y
    rot_z = se3.rot_z
    ref_poses = {
        1: se3.pose(rot_y(-p.phi0),
                    [p.a + 0.5 * p.L1 * sph, 0.0, -0.5 * p.L1 * cph]),
        2: se3.pose(np.eye(3),
                    [p.a + p.b1 + 0.5 * p.L1 * sph, 0.0, p.b3 - 0.5 * p.L1 * cph]),
        3: se3.pose(rot_y(-p.phi0),
                    [p.a + p.c1 + p.L1 * sph, 0.0, p.b3 - 0.5 * p.L1 * cph]),
        4: se3.pose(rot_z(-p.beta) @ rot_y(p.psi0),
                    [0.5 * (x4 + p.P1), -0.5 * (p.P2 + p.d2), z4 - 0.5 * p.L2 * cps]),
        5: se3.pose(rot_z(p.beta) @ rot_y(p.psi0),
                    [0.5 * (x4 + p.P1), 0.5 * (p.P2 + p.d2), z4 - 0.5 * p.L2 * cps]),
        6: se3.pose(np.eye(3), [0.0, 0.0, -p.h0]),
    }

    # Cut joint of the distal loop: universal joint between rod 5 and the
    # platform; three translation locks plus one axis-perpendicularity.
    # The rod-side axis is parallel to the rod's inner tree axis (the
    # double-Cardan arrangement that keeps the platform from rotating);
    # expressed in the rod frame it is constant.
    R5 = rot_z(p.beta) @ rot_y(p.psi0)
    distal_spec_args = dict(
        cycle_id=2, body_k=6, body_r=5,
        anchor_k=(p.P1, p.P2, p.P3),
        anchor_r=(0.0, 0.0, -p.L2 / 2.0),
        position_locks=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        orientation_pairs=(((-sb, cb, 0.0), tuple(R5.T @ e52)),),
    )

    # Cut joint of the proximal parallelogram (planar): lock the in-plane
    # translations of the anchor, expressed in the coupler frame.
    proximal_anchor = np.array([p.a + p.b1 + p.L1 * sph, 0.0, p.b3 - p.L1 * cph])

    # The platform-connecting universal joint, in cut-joint form; not a
    # loop of the limb model, but needed by full-system cross checks.
    R4 = ref_poses[4][:3, :3]
    attach_spec_args = dict(
        cycle_id=0, body_k=6, body_r=4,
        anchor_k=(p.P1, -p.P2, p.P3),
        anchor_r=(0.0, 0.0, -p.L2 / 2.0),
        position_locks=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        orientation_pairs=((tuple(e62), tuple(R4.T @ e61)),),
    )
    return _LimbData(screws, ref_poses, distal_spec_args, proximal_anchor,
                     attach_spec_args)


_MIRROR = np.diag([-1.0, 1.0, 1.0])


def _mirror_limb(data):
    """Mirror a limb through the y-z plane (x -> -x).

    Positions map with the reflection; axis directions flip sign on top of
    it so that equal joint angles produce the mirrored motion.
    """
    M = _MIRROR
    # Twists map as (w; v) -> (-M w; M v): the axis flips sign on top of
    # the reflection so equal angles give the mirrored motion, and the
    # moment v = y x e picks up det(M) = -1 from the cross product.
    screws = np.empty_like(data.screws)
    for i, s in enumerate(data.screws):
        e, m = s[:3], s[3:]
        screws[i] = np.concatenate([-M @ e, M @ m])

    def mpose(T):
        return se3.pose(M @ T[:3, :3] @ M, M @ T[:3, 3])

    def mvec(v):
        return tuple(M @ np.asarray(v, dtype=float))

    def mspec(args):
        out = dict(args)
        out["anchor_k"] = mvec(args["anchor_k"])
        out["anchor_r"] = mvec(args["anchor_r"])
        out["position_locks"] = tuple(mvec(u) for u in args["position_locks"])
        out["orientation_pairs"] = tuple(
            (mvec(uk), mvec(ur)) for uk, ur in args["orientation_pairs"]
        )
        return out

    return _LimbData(
        screws=screws,
        ref_poses={b: mpose(T) for b, T in data.ref_poses.items()},
        distal_spec_args=mspec(data.distal_spec_args),
        proximal_anchor=M @ data.proximal_anchor,
        attach_spec_args=mspec(data.attach_spec_args),
    )


def _limb_graph():
    joints = [
        Joint(1, 0, 1, JointKind.REVOLUTE),
        Joint(2, 1, 2, JointKind.REVOLUTE),
        Joint(3, 0, 3, JointKind.REVOLUTE),
        Joint(4, 2, 4, JointKind.UNIVERSAL),
        Joint(5, 2, 5, JointKind.UNIVERSAL),
        Joint(6, 4, 6, JointKind.UNIVERSAL),
        Joint(7, 3, 2, JointKind.REVOLUTE),
        Joint(8, 5, 6, JointKind.UNIVERSAL),
    ]
    return build_limb_graph(6, joints, (7, 8), platform=6)


def proximal_mode(data, kin, mode):
    """Cycle model of the parallelogram loop.

    ``analytic`` installs the exact closed-form solution (equal crank
    angles, opposite coupler angle) with its constant null-space column;
    ``cut_joint`` installs two in-plane translation locks on the cut
    revolute joint, solved iteratively like any other loop.
    """
    graph = kin.graph
    cycle1 = graph.cycles[0]
    partition = cn.CyclePartition(y_local=(1, 2), q_local=(0,))
    if mode == "analytic":
        analytic = solver.AnalyticCycleSolution(
            psi=lambda q: np.array([q[0], -q[0], q[0]]),
            H=np.array([[1.0], [-1.0], [1.0]]),
        )
        return solver.CycleModel(cycle=cycle1, spec=None, partition=partition,
                                 analytic=analytic)
    if mode != "cut_joint":
        raise ModelError(f"unknown proximal mode {mode!r}")
    p_cut = data.proximal_anchor
    C2, C3 = kin.A[2], kin.A[3]
    spec = cn.CutJointSpec(
        cycle_id=1, body_k=2, body_r=3,
        anchor_k=tuple(C2[:3, :3].T @ (p_cut - C2[:3, 3])),
        anchor_r=tuple(C3[:3, :3].T @ (p_cut - C3[:3, 3])),
        position_locks=((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    )
    return solver.CycleModel(cycle=cycle1, spec=spec, partition=partition)


def build_limb(data, mass_model, proximal="analytic", name="limb"):
    graph = _limb_graph()
    kin = LimbKinematics(graph, data.screws, data.ref_poses)
    cycle2 = graph.cycles[1]
    distal = solver.CycleModel(
        cycle=cycle2,
        spec=cn.CutJointSpec(**data.distal_spec_args),
        partition=cn.CyclePartition(y_local=(0, 1, 2, 3), q_local=(4, 5)),
    )
    # The separated limb's platform has three translational freedoms; the
    # task selector picks the translation rows of the platform twist and
    # the distribution matrix assigns the manipulator task rates (v_x,
    # v_z), locking the lateral component suppressed by the other limb.
    limb = solver.LimbModel(
        kin=kin,
        cycles=[proximal_mode(data, kin, proximal), distal],
        P_t=np.hstack([np.zeros((3, 3)), np.eye(3)]),
        D_t=np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]),
        name=name,
        masses={b.body: dyn.spatial_inertia(b.mass, b.inertia)
                for b in mass_model.bodies if b.body != 6},
        n_bar=7,
        platform_joint_spec=cn.CutJointSpec(**data.attach_spec_args),
    )
    return limb


def build_model(params=None, proximal="analytic", mass_model=None,
                gravity=(0.0, 0.0, -9.81)):
    """Assemble the two-limb manipulator model.

    Verifies that the zero configuration is an exact assembly of every
    loop of both limbs.
    """
    p = params if params is not None else default_params()
    mm = mass_model if mass_model is not None else default_mass_model()
    data1 = _limb_geometry(p)
    data2 = _mirror_limb(data1)
    limb1 = build_limb(data1, mm, proximal, name="limb1")
    limb2 = build_limb(data2, mm, proximal, name="limb2")

    P_p = np.zeros((6, 2))
    P_p[3, 0] = 1.0
    P_p[5, 1] = 1.0
    pkm = solver.PkmModel(
        limbs=[limb1, limb2],
        P_p=P_p,
        actuated=[(0, 0), (1, 0)],
        platform_inertia=mm.spatial(6),
        gravity=np.asarray(gravity, dtype=float),
    )
    _check_reference_assembly(pkm)
    return pkm


def _check_reference_assembly(pkm, tol=1e-12):
    for limb in pkm.limbs:
        kev = limb.kin.evaluate(np.zeros(limb.n_vars))
        for cm in limb.cycles:
            res = solver.loop_residual(limb, kev, cm)
            if res > tol:
                raise ModelError(
                    f"{limb.name}: cycle {cm.cycle.cycle_id} not assembled at "
                    f"reference (residual {res:.3e})"
                )
        spec = limb.platform_joint_spec
        ev = cn.assemble_cycle_constraints(
            spec, kev.body_pose[spec.body_k], kev.body_pose[spec.body_r],
            kev.body_jacobian(spec.body_k), kev.body_jacobian(spec.body_r))
        if np.abs(ev.g).max() > tol:
            raise ModelError(f"{limb.name}: platform joint open at reference")


# -- trajectory ---------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySpec:
    """Planar arc of the platform: parabolic blend driven by a squared-sine
    profile with ``nu`` strokes over the duration."""

    r0: tuple
    dx: float = 0.25
    dz: float = 0.45
    nu: float = 3.0
    duration: float = 1.0
    dt: float = 1e-3

    def times(self):
        n = int(round(self.duration / self.dt))
        return np.linspace(0.0, self.duration, n + 1)


def default_trajectory(params=None, dx=0.25, dz=0.45, nu=3.0, duration=1.0, dt=1e-3):
    p = params if params is not None else default_params()
    return TrajectorySpec(r0=(0.0, 0.0, -p.h0), dx=dx, dz=dz, nu=nu,
                          duration=duration, dt=dt)


def trajectory(spec, t):
    """Platform pose and task velocity/acceleration at time ``t``."""
    w = spec.nu * math.pi / spec.duration
    s = math.sin(w * t) ** 2
    sd = w * math.sin(2.0 * w * t)
    sdd = 2.0 * w * w * math.cos(2.0 * w * t)
    r0 = np.asarray(spec.r0, dtype=float)
    pos = r0 + np.array([spec.dx * s, 0.0, spec.dz * 4.0 * s * (1.0 - s)])
    vel = np.array([spec.dx * sd, 0.0, spec.dz * 4.0 * sd * (1.0 - 2.0 * s)])
    acc = np.array([spec.dx * sdd, 0.0,
                    spec.dz * 4.0 * (sdd * (1.0 - 2.0 * s) - 2.0 * sd * sd)])
    c_p = se3.pose(np.eye(3), pos)
    return c_p, np.array([vel[0], vel[2]]), np.array([acc[0], acc[2]])


def trajectory_samples(spec):
    out = []
    for t in spec.times():
        c_p, v_t, a_t = trajectory(spec, t)
        out.append((t, c_p, v_t, a_t))
    return out


# -- experiments ---------------------------------------------------------------


EXPERIMENT_KINDS = ("ik_nested", "ik_compound", "invdyn", "singularity")


@dataclass
class ExperimentReport:
    kind: str
    t: np.ndarray
    records: list  # solver.PkmStepRecord per sample
    torques: np.ndarray | None = None  # (n, n_act)
    kinetic: np.ndarray | None = None
    potential: np.ndarray | None = None
    power_residual: np.ndarray | None = None
    failure: solver.SolverStepError | None = None

    @property
    def cond_sqrt_kappa(self):
        return np.array([[lr.jac.cond_sqrt() for lr in rec.limbs] for rec in self.records])

    def outer_iterations(self, limb=0):
        return np.array([rec.limbs[limb].outer for rec in self.records])

    def inner_counts(self, limb=0, cycle=-1):
        """Loop-iteration counts of one cycle, per outer step, per sample."""
        return [[step[cycle] for step in rec.limbs[limb].inner] for rec in self.records]


def run_experiment(kind, pkm=None, traj=None, settings=None, params=None):
    """Run one of the predefined studies and collect per-step records."""
    if kind not in EXPERIMENT_KINDS:
        raise ModelError(f"unknown experiment {kind!r}")
    p = params if params is not None else default_params()
    if pkm is None:
        pkm = build_model(p)
    if traj is None:
        if kind == "singularity":
            traj = default_trajectory(p, dx=-0.15, dz=-0.6085)
        else:
            traj = default_trajectory(p)
    if settings is None:
        settings = solver.IkSettings()

    samples = trajectory_samples(traj)
    method = "compound" if kind == "ik_compound" else "nested"
    theta0 = [np.zeros(limb.n_vars) for limb in pkm.limbs]
    failure = None
    try:
        records = solver.pkm_inverse_kinematics(pkm, theta0, samples, settings, method)
    except solver.SolverStepError as err:
        failure = err
        records = err.partial
    t = np.array([s[0] for s in samples[: len(records)]])
    report = ExperimentReport(kind=kind, t=t, records=records, failure=failure)

    if kind == "invdyn" and not failure:
        n = len(records)
        n_act = len(pkm.actuated)
        u = np.zeros((n, n_act))
        kin_e = np.zeros(n)
        pot_e = np.zeros(n)
        act_power = np.zeros(n)
        for i, (rec, (_, _, v_t, a_t)) in enumerate(zip(records, samples)):
            thetas = [lr.theta for lr in rec.limbs]
            u[i] = dyn.inverse_dynamics(pkm, thetas, v_t, a_t)
            kin_e[i] = dyn.kinetic_energy(pkm, thetas, [lr.thetadot for lr in rec.limbs], v_t)
            pot_e[i] = dyn.potential_energy(pkm, thetas)
            act_rates = np.array([
                rec.limbs[li].thetadot[pkm.limbs[li].q_idx[col]]
                for li, col in pkm.actuated
            ])
            act_power[i] = u[i] @ act_rates
        energy = kin_e + pot_e
        dt = traj.dt
        edot = np.gradient(energy, dt)
        report.torques = u
        report.kinetic = kin_e
        report.potential = pot_e
        report.power_residual = np.abs(act_power - edot)
    return report
