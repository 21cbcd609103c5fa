"""URDF parsing into a validated kinematic-tree robot model.

The parser accepts the robot/link/joint subset (inertial origin+mass+inertia,
joint origin+axis+type) with revolute, continuous, prismatic, and fixed
joints.  Fixed joints are fused away, `continuous` maps to revolute, and
frames are renumbered depth-first so every parent index is smaller than its
child's.
"""

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace

import numpy as np

from . import spatial

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)

_SUPPORTED_JOINTS = {"revolute", "continuous", "prismatic", "fixed"}


class UrdfError(Exception):
    """Base error for model construction problems."""


class UrdfParseError(UrdfError):
    """Malformed XML or missing required structure."""


class UnsupportedFeatureError(UrdfError):
    """Joint type or construct outside the supported subset."""


class TopologyError(UrdfError):
    """Disconnected links, cycles, or multiple parents."""


class ModelValidationError(UrdfError):
    """Duplicate names or invariant violations."""


@dataclass
class JointSpec:
    kind: str  # revolute | prismatic | fixed
    axis: np.ndarray  # unit 3-vector, joint frame
    origin_rotation: np.ndarray  # 3x3, orientation of joint frame in parent frame
    origin_translation: np.ndarray  # 3-vector, meters
    name: str
    position_index: int | None = None  # None for fixed joints

    def validate(self):
        if self.kind not in ("revolute", "prismatic", "fixed"):
            raise ModelValidationError(f"joint {self.name!r}: bad kind {self.kind!r}")
        if self.kind != "fixed":
            if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
                raise ModelValidationError(f"joint {self.name!r}: axis is not unit length")
            if self.position_index is None:
                raise ModelValidationError(f"joint {self.name!r}: missing position index")
        elif self.position_index is not None:
            raise ModelValidationError(f"fixed joint {self.name!r} must not carry a position index")
        R = self.origin_rotation
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ModelValidationError(f"joint {self.name!r}: origin rotation is not a proper rotation")


@dataclass
class LinkInertia:
    mass: float  # kg
    com: np.ndarray  # 3-vector, link frame, meters
    inertia_about_com: np.ndarray  # symmetric 3x3, kg m^2

    def validate(self, name=""):
        if self.mass < 0.0:
            raise ModelValidationError(f"link {name!r}: negative mass")
        I = self.inertia_about_com
        if np.max(np.abs(I - I.T)) > 1e-12:
            raise ModelValidationError(f"link {name!r}: inertia matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (I + I.T))) < -1e-12:
            raise ModelValidationError(f"link {name!r}: inertia matrix is not positive semidefinite")

    def spatial(self):
        return spatial.spatial_inertia(self.mass, self.com, self.inertia_about_com)


@dataclass
class RobotModel:
    name: str
    parent: list  # parent frame index per frame, -1 for root children
    joints: list  # JointSpec per frame
    inertias: list  # LinkInertia per frame
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))

    @property
    def n_frames(self):
        return len(self.parent)

    @property
    def n_dof(self):
        return sum(1 for j in self.joints if j.kind != "fixed")

    def children(self, i):
        return [c for c, p in enumerate(self.parent) if p == i]

    def ancestors(self, i):
        """Strict ancestors of frame i, root first."""
        out = []
        p = self.parent[i]
        while p != -1:
            out.append(p)
            p = self.parent[p]
        return out[::-1]

    def subtree(self, i):
        """Frames in the subtree rooted at i (inclusive), ascending."""
        out = [i]
        for c in range(i + 1, self.n_frames):
            if self.parent[c] in out:
                out.append(c)
        return out

    def validate(self):
        n = self.n_frames
        if not (len(self.joints) == len(self.inertias) == n):
            raise ModelValidationError("per-frame arrays disagree in length")
        for i, p in enumerate(self.parent):
            if not -1 <= p < i:
                raise TopologyError(f"frame {i} has parent {p}; parents must be lower-numbered")
        indices = sorted(j.position_index for j in self.joints if j.kind != "fixed")
        if indices != list(range(len(indices))):
            raise ModelValidationError(f"position indices are not dense: {indices}")
        for j in self.joints:
            j.validate()
        for i, ine in enumerate(self.inertias):
            ine.validate(f"frame{i}")
        if len({j.name for j in self.joints}) != n:
            raise ModelValidationError("duplicate joint names after parsing")


def _req(elem, name, ctx):
    child = elem.find(name)
    if child is None:
        raise UrdfParseError(f"{ctx}: missing <{name}>")
    return child


def _vec3(text, ctx):
    try:
        v = np.array([float(x) for x in text.split()])
    except ValueError:
        raise UrdfParseError(f"{ctx}: bad vector {text!r}") from None
    if v.shape != (3,):
        raise UrdfParseError(f"{ctx}: expected 3 numbers, got {text!r}")
    return v


def _origin(elem):
    """xyz/rpy of an <origin> child (identity when absent)."""
    o = elem.find("origin")
    if o is None:
        return np.zeros(3), np.eye(3)
    xyz = _vec3(o.get("xyz", "0 0 0"), "origin")
    rpy = _vec3(o.get("rpy", "0 0 0"), "origin")
    return xyz, spatial.rpy_matrix(*rpy)


def _link_inertia(link_elem, link_name):
    """Fold the inertial origin into link-frame quantities."""
    ine = link_elem.find("inertial")
    if ine is None:
        return LinkInertia(0.0, np.zeros(3), np.zeros((3, 3)))
    xyz, R = _origin(ine)
    mass = float(_req(ine, "mass", f"link {link_name!r}").get("value", "0"))
    im = _req(ine, "inertia", f"link {link_name!r}")
    ixx, iyy, izz = (float(im.get(k, "0")) for k in ("ixx", "iyy", "izz"))
    ixy, ixz, iyz = (float(im.get(k, "0")) for k in ("ixy", "ixz", "iyz"))
    I_local = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    return LinkInertia(mass, xyz, R @ I_local @ R.T)


def parse_urdf(source, gravity=DEFAULT_GRAVITY):
    """Parse a URDF document (XML string or filesystem path) into a RobotModel.

    Raises UrdfParseError (with the XML line number for malformed input),
    UnsupportedFeatureError, TopologyError, or ModelValidationError.
    """
    text = source
    if "<" not in str(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise UrdfParseError(f"malformed XML at line {line}, column {col}: {exc.msg}") from None
    if root.tag != "robot":
        raise UrdfParseError(f"expected a single <robot> element, found <{root.tag}>")
    robot_name = root.get("name", "robot")

    links = {}
    for le in root.findall("link"):
        name = le.get("name")
        if name is None:
            raise UrdfParseError("link without a name")
        if name in links:
            raise ModelValidationError(f"duplicate link name {name!r}")
        links[name] = _link_inertia(le, name)

    joint_names = set()
    joints = []  # (name, kind, parent_link, child_link, xyz, R, axis)
    for je in root.findall("joint"):
        name = je.get("name")
        kind = je.get("type")
        if name in joint_names:
            raise ModelValidationError(f"duplicate joint name {name!r}")
        joint_names.add(name)
        if kind not in _SUPPORTED_JOINTS:
            raise UnsupportedFeatureError(
                f"joint {name!r} has unsupported type {kind!r} "
                f"(supported: revolute, continuous, prismatic, fixed)")
        parent = _req(je, "parent", f"joint {name!r}").get("link")
        child = _req(je, "child", f"joint {name!r}").get("link")
        for ln in (parent, child):
            if ln not in links:
                raise TopologyError(f"joint {name!r} references unknown link {ln!r}")
        xyz, R = _origin(je)
        axis = np.array([1.0, 0.0, 0.0])
        ax = je.find("axis")
        if ax is not None:
            axis = _vec3(ax.get("xyz", "1 0 0"), f"joint {name!r} axis")
        if kind == "continuous":
            kind = "revolute"  # limits do not enter the dynamics
        joints.append((name, kind, parent, child, xyz, R, axis))

    # Tree over links: every link except the root must be the child of
    # exactly one joint.
    child_of = {}
    for j in joints:
        if j[3] in child_of:
            raise TopologyError(f"link {j[3]!r} is the child of two joints")
        child_of[j[3]] = j
    roots = [ln for ln in links if ln not in child_of]
    if not roots:
        raise TopologyError("no root link (joint graph contains a cycle)")
    if len(roots) > 1:
        raise TopologyError(f"multiple root links: {sorted(roots)}")
    base = roots[0]

    # Depth-first preorder over links, children in joint declaration order.
    children_of = {ln: [] for ln in links}
    for j in joints:
        children_of[j[2]].append(j)
    order = []  # joints in frame order
    stack = [(base, None)]
    while stack:
        link, via = stack.pop()
        if via is not None:
            order.append(via)
        for j in reversed(children_of[link]):
            stack.append((j[3], j))
    if len(order) != len(joints):
        seen = {base} | {j[3] for j in order}
        missing = sorted(set(links) - seen)
        raise TopologyError(f"links not reachable from root {base!r}: {missing}")

    frame_of_link = {base: -1}
    parent_idx, specs, inertias = [], [], []
    pos = 0
    for i, (name, kind, parent, child, xyz, R, axis) in enumerate(order):
        frame_of_link[child] = i
        parent_idx.append(frame_of_link[parent])
        idx = None
        if kind != "fixed":
            idx = pos
            pos += 1
        specs.append(JointSpec(kind, axis, R, xyz, name, idx))
        inertias.append(links[child])

    model = RobotModel(robot_name, parent_idx, specs, inertias,
                       np.asarray(gravity, dtype=float))
    model = fuse_fixed(model)
    model.validate()
    return model


def fuse_fixed(model):
    """Fold every fixed-jointed frame into its parent.

    The child's spatial inertia is transformed through the fixed joint and
    summed into the parent; grandchild joints are re-parented with composed
    origins.  Mass welded directly to the world (fixed joint at the root) is
    absorbed by the ground and leaves the model.
    """
    parent = list(model.parent)
    joints = [replace(j) for j in model.joints]
    spatials = [ine.spatial() for ine in model.inertias]
    alive = [True] * len(parent)

    for i in reversed(range(len(parent))):
        j = joints[i]
        if j.kind != "fixed":
            continue
        X = spatial.xform_from_joint(j, 0.0)
        fused = spatial.apply_xform_inertia(X, spatials[i])
        p = parent[i]
        if p != -1:
            spatials[p] = spatials[p] + fused
        for c in range(i + 1, len(parent)):
            if alive[c] and parent[c] == i:
                jc = joints[c]
                joints[c] = replace(
                    jc,
                    origin_rotation=j.origin_rotation @ jc.origin_rotation,
                    origin_translation=j.origin_translation + j.origin_rotation @ jc.origin_translation,
                )
                parent[c] = p
        alive[i] = False

    remap = {}
    new_parent, new_joints, new_inertias = [], [], []
    for i in range(len(parent)):
        if not alive[i]:
            continue
        remap[i] = len(new_parent)
        new_parent.append(-1 if parent[i] == -1 else remap[parent[i]])
        mass, com, icom = spatial.decompose_spatial_inertia(spatials[i])
        new_joints.append(replace(joints[i], position_index=len(new_joints)))
        new_inertias.append(LinkInertia(mass, com, icom))
    return RobotModel(model.name, new_parent, new_joints, new_inertias,
                      model.gravity.copy())


def classify_topology(model):
    """'serial_chain' when every parent is the previous frame, else
    'branched_tree'.  Serial chains let generated code fold parent lookups
    into an index decrement."""
    if all(p == i - 1 for i, p in enumerate(model.parent)):
        return "serial_chain"
    return "branched_tree"


def to_urdf(model):
    """Emit a canonical URDF document; parse_urdf(to_urdf(m)) == m."""
    out = [f'<robot name="{model.name}">', '  <link name="base"/>']
    for i in range(model.n_frames):
        ine = model.inertias[i]
        I = ine.inertia_about_com
        out.append(f'  <link name="link{i}">')
        out.append('    <inertial>')
        out.append(f'      <origin xyz="{_fmt(ine.com)}" rpy="0 0 0"/>')
        out.append(f'      <mass value="{ine.mass!r}"/>')
        out.append(f'      <inertia ixx="{I[0,0]!r}" ixy="{I[0,1]!r}" ixz="{I[0,2]!r}" '
                   f'iyy="{I[1,1]!r}" iyz="{I[1,2]!r}" izz="{I[2,2]!r}"/>')
        out.append('    </inertial>')
        out.append('  </link>')
    for i, j in enumerate(model.joints):
        p = model.parent[i]
        plink = "base" if p == -1 else f"link{p}"
        rpy = spatial.rpy_from_matrix(j.origin_rotation)
        out.append(f'  <joint name="{j.name}" type="{j.kind}">')
        out.append(f'    <parent link="{plink}"/>')
        out.append(f'    <child link="link{i}"/>')
        out.append(f'    <origin xyz="{_fmt(j.origin_translation)}" rpy="{_fmt(rpy)}"/>')
        out.append(f'    <axis xyz="{_fmt(j.axis)}"/>')
        out.append('  </joint>')
    out.append('</robot>')
    return "\n".join(out)


def _fmt(v):
    return " ".join(repr(float(x)) for x in v)
