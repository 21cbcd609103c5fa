"""Spatial (6-D) algebra primitives.

Vectors are ordered [angular(3); linear(3)].  Transforms are kept compact as a
rotation E and a translation r; dense 6x6 Plucker matrices are only
materialized for cross-checking (see ``motion_matrix``/``force_matrix``).
"""

from dataclasses import dataclass

import numpy as np


def skew(v):
    """3x3 cross-product matrix: skew(v) @ w == np.cross(v, w)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation of `angle` about unit `axis` (right-handed)."""
    u = np.asarray(axis, dtype=float)
    s, c = np.sin(angle), np.cos(angle)
    su = skew(u)
    return np.eye(3) + s * su + (1.0 - c) * (su @ su)


def rpy_matrix(roll, pitch, yaw):
    """URDF fixed-axis convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return (rotation_about_axis([0, 0, 1], yaw)
            @ rotation_about_axis([0, 1, 0], pitch)
            @ rotation_about_axis([1, 0, 0], roll))


def rpy_from_matrix(R):
    """Inverse of rpy_matrix (pitch away from +-pi/2)."""
    roll = np.arctan2(R[2, 1], R[2, 2])
    pitch = np.arctan2(-R[2, 0], np.hypot(R[2, 1], R[2, 2]))
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return roll, pitch, yaw


def crm(v):
    """Motion cross-product operator: crm(v) @ m = v x m.

    Layout (entries are +-v[k] at fixed positions):

        [  0   -v2   v1    0    0    0 ]
        [  v2   0   -v0    0    0    0 ]
        [ -v1   v0    0    0    0    0 ]
        [  0   -v5   v4    0   -v2   v1]
        [  v5   0   -v3   v2    0   -v0]
        [ -v4   v3    0  -v1   v0    0 ]
    """
    v0, v1, v2, v3, v4, v5 = v
    return np.array([
        [0.0, -v2, v1, 0.0, 0.0, 0.0],
        [v2, 0.0, -v0, 0.0, 0.0, 0.0],
        [-v1, v0, 0.0, 0.0, 0.0, 0.0],
        [0.0, -v5, v4, 0.0, -v2, v1],
        [v5, 0.0, -v3, v2, 0.0, -v0],
        [-v4, v3, 0.0, -v1, v0, 0.0],
    ])


def crf(v):
    """Force cross-product operator: crf(v) = -crm(v).T exactly."""
    return -crm(v).T


@dataclass
class SpatialTransform:
    """Compact Plucker coordinate transform from frame A to frame B.

    E rotates A coordinates into B coordinates; r is the position of B's
    origin expressed in A coordinates.
    """

    E: np.ndarray  # 3x3, orthogonal, det +1
    r: np.ndarray  # 3

    @staticmethod
    def identity():
        return SpatialTransform(np.eye(3), np.zeros(3))

    def compose(self, inner):
        """self o inner: apply `inner` (A->B) first, then `self` (B->C)."""
        return SpatialTransform(self.E @ inner.E,
                                inner.r + inner.E.T @ self.r)

    def inverse(self):
        return SpatialTransform(self.E.T, -(self.E @ self.r))

    def motion_matrix(self):
        """Dense 6x6 transform for motion vectors (oracle path)."""
        X = np.zeros((6, 6))
        X[:3, :3] = self.E
        X[3:, 3:] = self.E
        X[3:, :3] = -self.E @ skew(self.r)
        return X

    def force_matrix(self):
        """Dense 6x6 transform for force vectors: inverse transpose of motion."""
        X = np.zeros((6, 6))
        X[:3, :3] = self.E
        X[3:, 3:] = self.E
        X[:3, 3:] = -self.E @ skew(self.r)
        return X


def apply_xform_motion(X, v):
    """Transform a motion vector from X's source frame to its destination."""
    ang = X.E @ v[:3]
    lin = X.E @ (v[3:] - np.cross(X.r, v[:3]))
    return np.concatenate([ang, lin])


def apply_xform_force(X, f):
    """Transform a force vector from X's source frame to its destination."""
    n = X.E @ (f[:3] - np.cross(X.r, f[3:]))
    lin = X.E @ f[3:]
    return np.concatenate([n, lin])


def apply_xform_force_transpose(X, f):
    """Transform a force vector from X's destination frame back to its source.

    Equals X.motion_matrix().T @ f; this is the inward force propagation of
    the dynamics backward passes.
    """
    ang = X.E.T @ f[:3] + np.cross(X.r, X.E.T @ f[3:])
    lin = X.E.T @ f[3:]
    return np.concatenate([ang, lin])


def apply_xform_inertia(X, I):
    """Congruence X.T @ I @ X mapping an inertia expressed in X's destination
    coordinates into X's source coordinates (the inward accumulation used by
    composite-rigid-body sums and fixed-joint fusion)."""
    E, r = X.E, X.r
    A = I[:3, :3]
    B = I[:3, 3:]
    C = I[3:, 3:]
    A2 = E.T @ A @ E
    B2 = E.T @ B @ E
    C2 = E.T @ C @ E
    sr = skew(r)
    out = np.zeros((6, 6))
    out[:3, :3] = A2 + sr @ B2.T - B2 @ sr - sr @ C2 @ sr
    out[:3, 3:] = B2 + sr @ C2
    out[3:, :3] = out[:3, 3:].T
    out[3:, 3:] = C2
    return out


def spatial_inertia(mass, com, inertia_about_com):
    """Assemble the 6x6 spatial inertia of one rigid body (link frame)."""
    c = skew(com)
    I = np.zeros((6, 6))
    I[:3, :3] = inertia_about_com + mass * (c @ c.T)
    I[:3, 3:] = mass * c
    I[3:, :3] = mass * c.T
    I[3:, 3:] = mass * np.eye(3)
    return I


def decompose_spatial_inertia(I):
    """Recover (mass, com, inertia_about_com) from a 6x6 spatial inertia."""
    mass = I[5, 5]
    if mass <= 0.0:
        return 0.0, np.zeros(3), I[:3, :3].copy()
    mc = I[:3, 3:]
    com = np.array([mc[2, 1], mc[0, 2], mc[1, 0]]) / mass
    c = skew(com)
    return mass, com, I[:3, :3] - mass * (c @ c.T)


def xform_from_joint(spec, q_i):
    """Parent->child transform of one joint at position q_i.

    Composes the joint's fixed origin with the motion transform of the joint
    coordinate: a coordinate rotation R(axis, q).T for revolute joints, a
    translation of q*axis for prismatic ones.  Fixed joints ignore q_i.
    """
    E0 = spec.origin_rotation.T
    r0 = spec.origin_translation
    if spec.kind == "revolute":
        Ej = rotation_about_axis(spec.axis, q_i).T
        return SpatialTransform(Ej @ E0, r0.copy())
    if spec.kind == "prismatic":
        return SpatialTransform(E0.copy(), r0 + spec.origin_rotation @ (q_i * spec.axis))
    if spec.kind == "fixed":
        return SpatialTransform(E0.copy(), r0.copy())
    raise ValueError(f"unknown joint kind {spec.kind!r}")


def motion_subspace(spec):
    """Free mode of one joint in its own frame: [axis;0] revolute, [0;axis]
    prismatic.  Fixed joints have no motion subspace."""
    if spec.kind == "revolute":
        return np.concatenate([spec.axis, np.zeros(3)])
    if spec.kind == "prismatic":
        return np.concatenate([np.zeros(3), spec.axis])
    raise ValueError(f"joint {spec.name!r} is fixed and has no motion subspace")
