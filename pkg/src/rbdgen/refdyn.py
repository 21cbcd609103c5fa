"""Reference rigid body dynamics algorithms with analytical gradients.

Clarity-first implementations that serve as ground truth for the generated
kernels: inverse dynamics via the recursive Newton-Euler sweeps, the direct
(recursive) inverse of the joint-space mass matrix, forward dynamics through
that inverse, and the analytical gradients of both.  A composite-rigid-body
mass matrix and a central-difference Jacobian are kept alongside purely as
independent oracles.

Conventions: single-dof revolute/prismatic joints, gravity entering as the
fictitious base acceleration a0 = [0,0,0,-g], external forces expressed in
each link's own frame at the link origin and subtracted from the body force.
"""

from dataclasses import dataclass

import numpy as np

from .spatial import (apply_xform_inertia, apply_xform_motion, crf, crm,
                      motion_subspace, xform_from_joint)


@dataclass
class DynamicsGradients:
    """Partial derivatives of a joint-space vector output with respect to the
    joint positions (dq) and velocities (dqd); both n x n."""
    dq: np.ndarray
    dqd: np.ndarray


def _check_state(model, *vecs):
    n = model.n_dof
    for v in vecs:
        v = np.asarray(v)
        if v.shape != (n,):
            raise ValueError(f"state vector has shape {v.shape}, expected ({n},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("state vector contains non-finite entries")


def _frame_data(model, q):
    """Per-frame dense motion transforms, motion subspaces, and inertias."""
    X = [xform_from_joint(model.joints[i], q[i]).motion_matrix()
         for i in range(model.n_frames)]
    S = [motion_subspace(model.joints[i]) for i in range(model.n_frames)]
    I = [model.inertias[i].spatial() for i in range(model.n_frames)]
    return X, S, I


def gravity_accel(model):
    """Spatial acceleration of the fixed base that reproduces gravity."""
    return np.concatenate([np.zeros(3), -model.gravity])


def _rnea_passes(model, q, qd, qdd, f_ext=None):
    """Both sweeps of the Newton-Euler recursion.

    Returns (v, a, f, tau) where f holds the accumulated joint wrenches
    after the backward pass.
    """
    n = model.n_frames
    X, S, I = _frame_data(model, q)
    a0 = gravity_accel(model)

    v = np.zeros((6, n))
    a = np.zeros((6, n))
    f = np.zeros((6, n))
    for i in range(n):
        p = model.parent[i]
        vJ = S[i] * qd[i]
        if p == -1:
            v[:, i] = vJ
            a[:, i] = X[i] @ a0
        else:
            v[:, i] = X[i] @ v[:, p] + vJ
            a[:, i] = X[i] @ a[:, p]
        a[:, i] += S[i] * qdd[i] + crm(v[:, i]) @ vJ
        f[:, i] = I[i] @ a[:, i] + crf(v[:, i]) @ (I[i] @ v[:, i])
        if f_ext is not None:
            f[:, i] -= f_ext[i]

    tau = np.zeros(n)
    for i in reversed(range(n)):
        tau[i] = S[i] @ f[:, i]
        p = model.parent[i]
        if p != -1:
            f[:, p] += X[i].T @ f[:, i]
    return v, a, f, tau


def rnea(model, q, qd, qdd, f_ext=None):
    """Inverse dynamics: joint torques realizing qdd at (q, qd)."""
    _check_state(model, q, qd, qdd)
    return _rnea_passes(model, q, qd, qdd, f_ext)[3]


def bias_force(model, q, qd, f_ext=None):
    """Torque needed to hold zero acceleration: rnea with qdd = 0."""
    _check_state(model, q, qd)
    return rnea(model, q, qd, np.zeros(model.n_dof), f_ext)


def crba_mass_matrix(model, q):
    """Joint-space mass matrix via composite-rigid-body accumulation.

    Oracle path; the generated kernels never use it.
    """
    _check_state(model, q)
    n = model.n_frames
    X, S, I = _frame_data(model, q)
    Xc = [xform_from_joint(model.joints[i], q[i]) for i in range(n)]
    Ic = [Ii.copy() for Ii in I]
    M = np.zeros((n, n))
    for i in reversed(range(n)):
        p = model.parent[i]
        if p != -1:
            Ic[p] += apply_xform_inertia(Xc[i], Ic[i])
        fh = Ic[i] @ S[i]
        M[i, i] = S[i] @ fh
        j = i
        while model.parent[j] != -1:
            fh = X[j].T @ fh
            j = model.parent[j]
            M[i, j] = M[j, i] = S[j] @ fh
    return M


def minv_direct(model, q):
    """Inverse of the mass matrix by the recursive articulated-body
    factorization (no dense inversion).

    A backward pass accumulates articulated inertias and seeds the rows of
    M^-1 over each subtree; a forward pass propagates the response of the
    remaining columns through the tree.  Entries coupling frames in disjoint
    trees stay exactly zero.
    """
    _check_state(model, q)
    n = model.n_frames
    X, S, I = _frame_data(model, q)

    IA = [Ii.copy() for Ii in I]
    F = np.zeros((n, 6, n))
    U = np.zeros((n, 6))
    Dinv = np.zeros(n)
    Minv = np.zeros((n, n))

    for i in reversed(range(n)):
        p = model.parent[i]
        U[i] = IA[i] @ S[i]
        Dinv[i] = 1.0 / (S[i] @ U[i])
        sub = model.subtree(i)
        Minv[i, i] = Dinv[i]
        Minv[i, sub] -= Dinv[i] * (S[i] @ F[i][:, sub])
        if p != -1:
            F[p][:, sub] += X[i].T @ (F[i][:, sub] + np.outer(U[i], Minv[i, sub]))
            IA[p] += X[i].T @ ((IA[i] - np.outer(U[i], Dinv[i] * U[i])) @ X[i])

    for i in range(n):
        p = model.parent[i]
        if p != -1:
            tmp = X[i] @ F[p][:, i:]
            Minv[i, i:] -= Dinv[i] * (U[i] @ tmp)
            F[i][:, i:] = np.outer(S[i], Minv[i, i:]) + tmp
        else:
            F[i][:, i:] = np.outer(S[i], Minv[i, i:])

    for i in range(n):
        Minv[i + 1:, i] = Minv[i, i + 1:]
    return Minv


def forward_dynamics(model, q, qd, tau, f_ext=None):
    """Joint accelerations: M^-1 (tau - bias)."""
    _check_state(model, q, qd, tau)
    return minv_direct(model, q) @ (np.asarray(tau) - bias_force(model, q, qd, f_ext))


def rnea_grad(model, q, qd, qdd, f_ext=None):
    """Analytical partials of inverse dynamics with respect to q and qd.

    Differentiates both Newton-Euler sweeps.  With X(q) the parent-to-child
    transform and S the joint's free mode, d(X u)/dq = (X u) x S, giving the
    per-frame seeds; everything else is the chain rule through v, a, f.  The
    columns are mutually independent, which the kernel generator exploits.
    """
    _check_state(model, q, qd, qdd)
    n = model.n_frames
    X, S, I = _frame_data(model, q)
    a0 = gravity_accel(model)
    v, a, f, _ = _rnea_passes(model, q, qd, qdd, f_ext)

    dv_dq = np.zeros((6, n, n))
    dv_dqd = np.zeros((6, n, n))
    da_dq = np.zeros((6, n, n))
    da_dqd = np.zeros((6, n, n))
    df_dq = np.zeros((6, n, n))
    df_dqd = np.zeros((6, n, n))

    for i in range(n):
        p = model.parent[i]
        vJ = S[i] * qd[i]
        if p == -1:
            Xv = np.zeros(6)
            Xa = X[i] @ a0
        else:
            Xv = X[i] @ v[:, p]
            Xa = X[i] @ a[:, p]
            dv_dq[:, :, i] = X[i] @ dv_dq[:, :, p]
            dv_dqd[:, :, i] = X[i] @ dv_dqd[:, :, p]
            da_dq[:, :, i] = X[i] @ da_dq[:, :, p]
            da_dqd[:, :, i] = X[i] @ da_dqd[:, :, p]
        dv_dq[:, i, i] += crm(Xv) @ S[i]
        dv_dqd[:, i, i] += S[i]
        for c in range(n):
            da_dq[:, c, i] += crm(dv_dq[:, c, i]) @ vJ
            da_dqd[:, c, i] += crm(dv_dqd[:, c, i]) @ vJ
        da_dq[:, i, i] += crm(Xa) @ S[i]
        da_dqd[:, i, i] += crm(v[:, i]) @ S[i]

        Iv = I[i] @ v[:, i]
        fxv = crf(v[:, i]) @ I[i]
        df_dq[:, :, i] = I[i] @ da_dq[:, :, i] + fxv @ dv_dq[:, :, i]
        df_dqd[:, :, i] = I[i] @ da_dqd[:, :, i] + fxv @ dv_dqd[:, :, i]
        for c in range(n):
            df_dq[:, c, i] += crf(dv_dq[:, c, i]) @ Iv
            df_dqd[:, c, i] += crf(dv_dqd[:, c, i]) @ Iv

    dc_dq = np.zeros((n, n))
    dc_dqd = np.zeros((n, n))
    for i in reversed(range(n)):
        dc_dq[i, :] = S[i] @ df_dq[:, :, i]
        dc_dqd[i, :] = S[i] @ df_dqd[:, :, i]
        p = model.parent[i]
        if p != -1:
            df_dq[:, :, p] += X[i].T @ df_dq[:, :, i]
            # d/dq_i of the inward transport X(q_i)^T f_i
            df_dq[:, i, p] += X[i].T @ (crf(S[i]) @ f[:, i])
            df_dqd[:, :, p] += X[i].T @ df_dqd[:, :, i]
    return DynamicsGradients(dc_dq, dc_dqd)


def fd_grad(model, q, qd, tau, f_ext=None):
    """Analytical partials of forward dynamics: -M^-1 d(rnea)/du at the
    accelerations produced by (q, qd, tau)."""
    _check_state(model, q, qd, tau)
    Minv = minv_direct(model, q)
    qdd = Minv @ (np.asarray(tau) - bias_force(model, q, qd, f_ext))
    g = rnea_grad(model, q, qd, qdd, f_ext)
    return DynamicsGradients(-Minv @ g.dq, -Minv @ g.dqd)


def finite_diff_oracle(fn, x, h):
    """Central-difference Jacobian of fn at x, column per coordinate."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.stack(cols, axis=1)


def world_transforms(model, q):
    """World-to-frame transform per frame (compact form)."""
    out = []
    for i in range(model.n_frames):
        Xi = xform_from_joint(model.joints[i], q[i])
        p = model.parent[i]
        out.append(Xi if p == -1 else Xi.compose(out[p]))
    return out


def geometric_jacobian(model, q, frame):
    """World-frame geometric Jacobian of `frame` (oracle for external-force
    checks): column j is joint j's free mode carried to world coordinates,
    zero for joints outside the frame's ancestry."""
    _check_state(model, q)
    J = np.zeros((6, model.n_dof))
    Xw = world_transforms(model, q)
    for j in model.ancestors(frame) + [frame]:
        J[:, j] = apply_xform_motion(Xw[j].inverse(), motion_subspace(model.joints[j]))
    return J
