"""Kinematic topology of a single limb.

A limb is described by a connected graph whose vertices are bodies
(ground = 0) and whose edges are joints.  Removing the designated cut
joints must leave a ground-directed spanning tree in which every moving
body has a unique path to ground.  Each cut joint closes one fundamental
cycle; the cycles of a hybrid limb are pairwise edge-disjoint.

Canonical numbering convention: tree joint ``i`` connects body ``i`` to
its parent, and the parent always carries a smaller index.  Scalar joint
variables are laid out in tree-joint order (a universal joint contributes
two consecutive variables).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class TopologyError(ValueError):
    """Base class for limb-graph construction failures."""


class NotATree(TopologyError):
    """Cut-edge removal leaves a loop or disconnects the graph."""


class NonCanonicalOrder(TopologyError):
    """Tree numbering violates parent < child or joint/body labelling."""


class DanglingBody(TopologyError):
    """A body is referenced by no joint or a joint references no body."""


class JointKind(Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"
    UNIVERSAL = "universal"

    @property
    def dof(self):
        return 2 if self is JointKind.UNIVERSAL else 1


@dataclass(frozen=True)
class Joint:
    joint_id: int
    body_a: int
    body_b: int
    kind: JointKind


@dataclass(frozen=True)
class FundamentalCycle:
    """One independent loop: its cut joint and the tree variables it spans."""

    cycle_id: int
    cut_joint_id: int
    tree_joint_ids: tuple[int, ...]
    var_indices: tuple[int, ...]  # indices into the limb variable vector


@dataclass
class LimbGraph:
    n_bodies: int  # moving bodies, numbered 1..n_bodies (ground = 0)
    joints: list[Joint]
    cut_joint_ids: tuple[int, ...]
    platform: int | None = None
    parent: dict[int, int] = field(default_factory=dict)  # body -> parent body
    tree_joint_of: dict[int, Joint] = field(default_factory=dict)  # body -> joint
    var_offset: dict[int, int] = field(default_factory=dict)  # tree joint id -> first var
    n_vars: int = 0
    cycles: list[FundamentalCycle] = field(default_factory=list)

    def joint_by_id(self, joint_id):
        for j in self.joints:
            if j.joint_id == joint_id:
                return j
        raise KeyError(joint_id)

    def joint_vars(self, joint_id):
        """Variable indices of a tree joint."""
        off = self.var_offset[joint_id]
        return list(range(off, off + self.joint_by_id(joint_id).kind.dof))


def build_limb_graph(n_bodies, joints, cut_joint_ids, platform=None):
    """Validate a limb description and derive its spanning-tree structure.

    Raises :class:`NotATree`, :class:`NonCanonicalOrder` or
    :class:`DanglingBody` when the description is inconsistent, and
    :class:`TopologyError` when two cycles share a tree edge (only hybrid
    limbs, with edge-disjoint loops, are supported).
    """
    cut_joint_ids = tuple(cut_joint_ids)
    bodies = set(range(n_bodies + 1))
    seen = {0}
    for j in joints:
        if j.body_a not in bodies or j.body_b not in bodies:
            raise DanglingBody(f"joint {j.joint_id} references unknown body")
        seen.update((j.body_a, j.body_b))
    if seen != bodies:
        missing = sorted(bodies - seen)
        raise DanglingBody(f"bodies without any joint: {missing}")

    tree_joints = [j for j in joints if j.joint_id not in cut_joint_ids]
    known_ids = {j.joint_id for j in joints}
    for cid in cut_joint_ids:
        if cid not in known_ids:
            raise DanglingBody(f"cut joint {cid} does not exist")
    if len(tree_joints) != n_bodies:
        raise NotATree(
            f"{len(tree_joints)} tree joints cannot span {n_bodies} moving bodies"
        )

    # Root the tree at ground and check it is indeed a tree.
    adj = {b: [] for b in bodies}
    for j in tree_joints:
        adj[j.body_a].append((j.body_b, j))
        adj[j.body_b].append((j.body_a, j))
    parent, tree_joint_of = {}, {}
    stack, visited = [0], {0}
    while stack:
        b = stack.pop()
        for nb, j in adj[b]:
            if nb in visited:
                continue
            visited.add(nb)
            parent[nb] = b
            tree_joint_of[nb] = j
            stack.append(nb)
    if visited != bodies:
        raise NotATree("cut removal disconnects the graph")
    # n_bodies edges + full connectivity implies acyclic, but a repeated
    # edge between visited bodies would have been a loop:
    for j in tree_joints:
        if tree_joint_of.get(j.body_a) is not j and tree_joint_of.get(j.body_b) is not j:
            raise NotATree(f"tree joint {j.joint_id} closes a loop")

    for body, j in tree_joint_of.items():
        if parent[body] >= body:
            raise NonCanonicalOrder(f"parent {parent[body]} of body {body} not smaller")
        if j.joint_id != body:
            raise NonCanonicalOrder(
                f"tree joint {j.joint_id} must carry the index of its child body {body}"
            )

    graph = LimbGraph(
        n_bodies=n_bodies,
        joints=list(joints),
        cut_joint_ids=cut_joint_ids,
        platform=platform,
        parent=parent,
        tree_joint_of=tree_joint_of,
    )
    offset = 0
    for body in range(1, n_bodies + 1):
        j = tree_joint_of[body]
        graph.var_offset[j.joint_id] = offset
        offset += j.kind.dof
    graph.n_vars = offset
    graph.cycles = _fundamental_cycles(graph)
    return graph


def _path_joints(graph, body):
    """Tree-joint ids on the path from ``body`` up to ground."""
    out = []
    while body != 0:
        out.append(graph.tree_joint_of[body].joint_id)
        body = graph.parent[body]
    return out


def _fundamental_cycles(graph):
    cycles = []
    used = set()
    for k, cid in enumerate(graph.cut_joint_ids, start=1):
        cut = graph.joint_by_id(cid)
        pa = set(_path_joints(graph, cut.body_a))
        pb = set(_path_joints(graph, cut.body_b))
        tree_ids = tuple(sorted(pa ^ pb))
        overlap = used & set(tree_ids)
        if overlap:
            raise TopologyError(
                f"cycles share tree joints {sorted(overlap)}; limb is not hybrid"
            )
        used.update(tree_ids)
        var_idx = tuple(i for jid in tree_ids for i in graph.joint_vars(jid))
        cycles.append(FundamentalCycle(k, cid, tree_ids, var_idx))
    return cycles


def fundamental_cycles(graph):
    """The limb's fundamental cycles, one per cut joint."""
    return list(graph.cycles)


def predecessor_set(graph, body):
    """Bodies on the ground-to-``body`` path, ground excluded, in order."""
    if body == 0:
        return []
    out = []
    while body != 0:
        out.append(body)
        body = graph.parent[body]
    return out[::-1]


def free_var_indices(graph):
    """Variables that belong to no fundamental cycle (extra limb coordinates)."""
    in_cycles = {i for c in graph.cycles for i in c.var_indices}
    return [i for i in range(graph.n_vars) if i not in in_cycles]
