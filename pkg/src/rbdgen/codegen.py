"""Kernel generation: flat, branch-free dynamics programs for one robot.

Every loop of the reference recursions is unrolled against the model: tree
sweeps become one phase per depth level (work item per frame), gradient
recursions become (frame x column) work items over the retained columns of
the sparsity map, and all slot addresses come from the workspace layout, so
the emitted instructions contain no indirection of any kind.  Parent
accumulations (several children summing into one frame) are emitted as
parent-owned gather items so no phase ever has two items touching the same
slot.

Values that are known while generating (joint axes, inertias, folded origin
coefficients, structural zeros) never reach the instruction stream: constant
subexpressions are folded, zero terms are dropped, and whole columns that the
sparsity analysis proves zero are neither stored nor computed.
"""

import numpy as np

from . import ir
from .schedule import analyze_sparsity, build_levels, plan_workspace
from .spatial import motion_subspace, skew
from .urdf import classify_topology

# crm(v)[r][c] = sign * v[k]
_CRM_PAT = {
    (0, 1): (2, -1), (0, 2): (1, +1),
    (1, 0): (2, +1), (1, 2): (0, -1),
    (2, 0): (1, -1), (2, 1): (0, +1),
    (3, 1): (5, -1), (3, 2): (4, +1), (3, 4): (2, -1), (3, 5): (1, +1),
    (4, 0): (5, +1), (4, 2): (3, -1), (4, 3): (2, +1), (4, 5): (0, -1),
    (5, 0): (4, -1), (5, 1): (3, +1), (5, 3): (1, -1), (5, 4): (0, +1),
}
# crf(v) = -crm(v)^T
_CRF_PAT = {(c, r): (k, -s) for (r, c), (k, s) in _CRM_PAT.items()}

_SKEW_PAT = {(0, 1): (2, -1), (0, 2): (1, +1), (1, 0): (2, +1),
             (1, 2): (0, -1), (2, 0): (1, -1), (2, 1): (0, +1)}


def _is_const(e):
    return isinstance(e, float)


def _is_zero(e):
    return e is None or (isinstance(e, float) and e == 0.0)


class GenerationError(ValueError):
    pass


class _Builder:
    """Instruction emission with constant folding.

    Entries are either None (structurally zero), a float (value known at
    generation time), or an int (arena slot holding a runtime value).
    """

    def __init__(self, layout):
        self.layout = layout
        self.phases = []
        self._items = None
        cseg = layout.segment("const")
        self._const_base = cseg.offset
        self._const_cap = cseg.extent
        self._consts = {}  # value -> slot

    # -- program structure ------------------------------------------------
    def phase(self, label):
        self.phases.append(ir.Phase(label, []))
        self._items = self.phases[-1].items

    def item(self):
        self._items.append([])
        return self._items[-1]

    @property
    def _cur(self):
        return self._items[-1]

    def finalize(self, arena_size, input_map, output_map, meta):
        setup = ir.Phase("setup", [])
        loads = sorted(self._consts.items(), key=lambda kv: kv[1])
        for k in range(0, len(loads), 64):
            setup.items.append([(ir.CONST, slot, val) for val, slot in loads[k:k + 64]])
        phases = ([setup] if setup.items else []) + [p for p in self.phases if p.items]
        prog = ir.KernelProgram(arena_size, input_map, output_map, phases, meta)
        ir.validate_program(prog)
        return prog

    # -- operands ----------------------------------------------------------
    def cslot(self, value):
        value = float(value)
        if value == 0.0:
            value = 0.0  # collapse -0.0
        slot = self._consts.get(value)
        if slot is None:
            if len(self._consts) >= self._const_cap:
                raise GenerationError("constant pool exceeded its reserved segment")
            slot = self._const_base + len(self._consts)
            self._consts[value] = slot
        return slot

    def ref(self, entry):
        if entry is None:
            return self.cslot(0.0)
        if _is_const(entry):
            return self.cslot(entry)
        return entry

    # -- core emission -----------------------------------------------------
    def lincomb(self, dst, terms, csum=0.0, accumulate=False, negate=False, pin=False):
        """dst = [dst +] sum of sign*a*b (+ csum), with folding.

        Returns the resulting entry: the dst slot when instructions were
        emitted (or pin requested), otherwise the folded constant.
        """
        csum = float(csum)
        prods = []
        for sign, ea, eb in terms:
            if _is_zero(ea) or _is_zero(eb):
                continue
            if _is_const(ea) and _is_const(eb):
                csum += sign * ea * eb
                continue
            if _is_const(ea):  # keep the runtime operand first
                ea, eb = eb, ea
            prods.append((sign, ea, eb))
        if negate:
            csum = -csum
            prods = [(-s, a, b) for s, a, b in prods]

        out = self._cur
        if accumulate:
            assert isinstance(dst, int)
            negp = [(a, b) for s, a, b in prods if s < 0]
            posp = [(a, b) for s, a, b in prods if s > 0]
            if negp:
                out.append((ir.NEG, dst, dst))
                for a, b in negp:
                    out.append((ir.FMA, dst, self.ref(a), self.ref(b), dst))
                out.append((ir.NEG, dst, dst))
            for a, b in posp:
                if _is_const(b) and b == 1.0:
                    out.append((ir.ADD, dst, dst, self.ref(a)))
                else:
                    out.append((ir.FMA, dst, self.ref(a), self.ref(b), dst))
            if csum != 0.0:
                out.append((ir.ADD, dst, dst, self.cslot(csum)))
            return dst

        if not prods:
            if pin:
                # always store: the slot may hold a stale value from an
                # earlier phase (assignment, not first-write)
                out.append((ir.CONST, dst, csum))
                return dst
            return csum

        negp = [(a, b) for s, a, b in prods if s < 0]
        posp = [(a, b) for s, a, b in prods if s > 0]
        started = False
        if negp:
            (a0, b0) = negp[0]
            out.append((ir.MUL, dst, self.ref(a0), self.ref(b0)))
            for a, b in negp[1:]:
                out.append((ir.FMA, dst, self.ref(a), self.ref(b), dst))
            out.append((ir.NEG, dst, dst))
            started = True
        for a, b in posp:
            if started:
                out.append((ir.FMA, dst, self.ref(a), self.ref(b), dst))
            else:
                out.append((ir.MUL, dst, self.ref(a), self.ref(b)))
                started = True
        if csum != 0.0:
            out.append((ir.ADD, dst, dst, self.cslot(csum)))
        return dst

    def copy(self, dst, entry, pin=True):
        """dst = entry (exact, via multiply by one)."""
        return self.lincomb(dst, [(+1, entry, 1.0)], pin=pin)

    def vec_assign(self, slots, row_terms, csums=None, pin=False):
        """Six lincombs; returns the entry vector."""
        return [self.lincomb(slots[r], row_terms[r],
                             csum=0.0 if csums is None else csums[r], pin=pin)
                for r in range(len(slots))]

    # -- term builders -------------------------------------------------------
    @staticmethod
    def matvec_terms(grid, vec, transpose=False):
        rows = []
        n = len(grid)
        for r in range(n):
            rows.append([(+1, grid[k][r] if transpose else grid[r][k], vec[k])
                         for k in range(len(vec))])
        return rows

    @staticmethod
    def cross_terms(pat, v, w):
        rows = [[] for _ in range(6)]
        for (r, c), (k, s) in sorted(pat.items()):
            rows[r].append((s, v[k], w[c]))
        return rows


def _entry_vec(layout, seg, row):
    base = layout.addr(seg, row, 0)
    return [base + k for k in range(6)]


class _Gen:
    def __init__(self, model, algorithm, schedule, layout):
        self.model = model
        self.alg = algorithm
        self.sched = schedule
        self.layout = layout
        self.cols = analyze_sparsity(model, algorithm)
        self.b = _Builder(layout)
        self.fused = layout.fused_cross
        self.n = model.n_dof
        self.nf = model.n_frames

        self.S = [motion_subspace(j).tolist() for j in model.joints]
        self.I = [ine.spatial().tolist() for ine in model.inertias]
        g = model.gravity
        self.a0 = [0.0, 0.0, 0.0, -g[0], -g[1], -g[2]]

        # per-frame entry grids, filled as phases are emitted
        self.X = [None] * self.nf
        self.vJ = [None] * self.nf
        self.v = [None] * self.nf
        self.a = [None] * self.nf
        self.f = [None] * self.nf
        self.Iv = [None] * self.nf
        self.crm_g = [None] * self.nf
        self.crf_g = [None] * self.nf
        self.fxvI = [None] * self.nf
        self.grad = {}  # (name, frame, col) -> entry vec
        self.minv_grid = {}  # (i, j) i<=j -> entry

    # ---- shared pieces -----------------------------------------------------
    def in_slot(self, name, i):
        return self.layout.addr(name, i)

    def seg_vec(self, name, i):
        return _entry_vec(self.layout, name, i)

    def cross_rows(self, kind, frame, w):
        """Row terms of crm/crf(v_frame) @ w honoring the layout mode."""
        if self.fused or self.crm_g[frame] is None:
            pat = _CRM_PAT if kind == "m" else _CRF_PAT
            return self.b.cross_terms(pat, self.v[frame], w)
        grid = self.crm_g[frame] if kind == "m" else self.crf_g[frame]
        return self.b.matvec_terms(grid, w)

    def emit_xforms(self, with_vel):
        b = self.b
        lay = self.layout
        b.phase("xform")
        prismatic = "jr" in lay.segments
        for i in range(self.nf):
            b.item()
            spec = self.model.joints[i]
            E0 = spec.origin_rotation.T
            u = spec.axis
            su = skew(u)
            q_slot = lay.addr("q", i)
            if spec.kind == "revolute":
                A = (np.eye(3) + su @ su) @ E0
                B = su @ E0
                C = su @ su @ E0
                sn, cn = lay.addr("sincos", i, 0), lay.addr("sincos", i, 1)
                b._cur.append((ir.SIN, sn, q_slot))
                b._cur.append((ir.COS, cn, q_slot))
                E = [[None] * 3 for _ in range(3)]
                for r in range(3):
                    for c in range(3):
                        E[r][c] = b.lincomb(lay.addr("X", i, r, c),
                                            [(-1, sn, float(B[r, c])),
                                             (-1, cn, float(C[r, c]))],
                                            csum=float(A[r, c]))
                r_ent = [float(x) for x in spec.origin_translation]
            else:  # prismatic
                E = [[float(E0[r, c]) for c in range(3)] for r in range(3)]
                w = spec.origin_rotation @ u
                r_ent = [b.lincomb(lay.addr("jr", i, k),
                                   [(+1, q_slot, float(w[k]))],
                                   csum=float(spec.origin_translation[k]))
                         for k in range(3)]
                assert prismatic
            # dense spatial matrix: [[E, 0], [-E skew(r), E]]
            X = [[None] * 6 for _ in range(6)]
            for r in range(3):
                for c in range(3):
                    X[r][c] = E[r][c]
                    X[3 + r][3 + c] = E[r][c]
            for r in range(3):
                for c in range(3):
                    terms = [(-s, E[r][k], r_ent[m])
                             for (k, c2), (m, s) in _SKEW_PAT.items() if c2 == c]
                    X[3 + r][c] = b.lincomb(lay.addr("X", i, 3 + r, c), terms)
            self.X[i] = X
            if with_vel:
                qd_slot = lay.addr("qd", i)
                self.vJ[i] = [b.lincomb(lay.addr("vJ", i, k),
                                        [(+1, qd_slot, self.S[i][k])])
                              for k in range(6)]

    def emit_forward(self, qdd_of, label="fwd", accel_only=False):
        """Velocity/acceleration sweep, one phase per level.

        qdd_of(i) -> entry for the joint acceleration (None for the bias
        sweep).  Also materializes the per-frame cross operator matrices when
        the layout is not fused.  accel_only reuses the velocities of an
        earlier sweep and recomputes accelerations only.
        """
        b = self.b
        for lv, frames in enumerate(self.sched.levels):
            b.phase(f"{label}_level_{lv}")
            for i in frames:
                b.item()
                p = self.model.parent[i]
                if not accel_only:
                    if p == -1:
                        self.v[i] = self.vJ[i]
                    else:
                        rows = b.matvec_terms(self.X[i], self.v[p])
                        for r in range(6):
                            rows[r].append((+1, self.vJ[i][r], 1.0))
                        self.v[i] = b.vec_assign(self.seg_vec("v", i), rows)
                    if not self.fused:
                        self._materialize_cross(i)
                qdd = qdd_of(i)
                parent_a = self.a0 if p == -1 else self.a[p]
                rows = b.matvec_terms(self.X[i], parent_a)
                if qdd is not None:
                    for r in range(6):
                        rows[r].append((+1, qdd, self.S[i][r]))
                if self.v[i] is not self.vJ[i]:  # v x vJ vanishes at the roots
                    cross = self.cross_rows("m", i, self.vJ[i])
                    for r in range(6):
                        rows[r].extend(cross[r])
                self.a[i] = b.vec_assign(self.seg_vec("a", i), rows)

    def _materialize_cross(self, i):
        """Write the nonzero crm(v) entries into their matrix slots; crf
        aliases the same slots through the sign-flipped transpose."""
        b = self.b
        lay = self.layout
        v = self.v[i]
        pos = {}
        neg = {}
        self.crm_g[i] = [[None] * 6 for _ in range(6)]
        for (r, c), (k, s) in sorted(_CRM_PAT.items()):
            e = v[k]
            slot = lay.addr("crm_v", i, r, c)
            if e is None:
                ent = None
            elif _is_const(e):
                ent = s * e
            elif s > 0:
                if k not in pos:
                    b._cur.append((ir.MUL, slot, b.ref(e), b.cslot(1.0)))
                    pos[k] = slot
                ent = pos[k]
            else:
                if k not in neg:
                    b._cur.append((ir.NEG, slot, b.ref(e)))
                    neg[k] = slot
                ent = neg[k]
            self.crm_g[i][r][c] = ent
        # every component appears with both signs among the crm entries, so
        # the force operator is pure aliasing into the same slots
        crf = [[None] * 6 for _ in range(6)]
        for (r, c), (k, s) in _CRF_PAT.items():
            e = v[k]
            if e is None:
                continue
            if _is_const(e):
                crf[r][c] = s * e
            else:
                crf[r][c] = pos[k] if s > 0 else neg[k]
        self.crf_g[i] = crf

    def emit_body_force(self, label="body_force"):
        b = self.b
        b.phase(label)
        for i in range(self.nf):
            b.item()
            Ic = self.I[i]
            if self.Iv[i] is None:
                self.Iv[i] = b.vec_assign(
                    self.seg_vec("Iv", i),
                    [[(+1, self.v[i][k], Ic[r][k]) for k in range(6)] for r in range(6)])
            rows = [[(+1, self.a[i][k], Ic[r][k]) for k in range(6)] for r in range(6)]
            cross = self.cross_rows("f", i, self.Iv[i])
            for r in range(6):
                rows[r].extend(cross[r])
            self.f[i] = b.vec_assign(self.seg_vec("f", i), rows, pin=True)

    def emit_backward_force(self, tau_seg, label="bwd"):
        """Inward accumulation of joint wrenches; writes S^T f into tau_seg
        when given.  Multi-child parents get a gather phase; an only child
        adds into its parent directly."""
        b = self.b
        for lv in range(self.sched.depth - 1, -1, -1):
            b.phase(f"{label}_level_{lv}")
            gather = {}
            for i in self.sched.levels[lv]:
                b.item()
                if tau_seg is not None:
                    b.lincomb(self.layout.addr(tau_seg, i),
                              [(+1, self.f[i][k], self.S[i][k]) for k in range(6)],
                              pin=True)
                p = self.model.parent[i]
                if p == -1:
                    continue
                siblings = [c for c in self.model.children(p)
                            if self.sched.level_of[c] == lv]
                rows = b.matvec_terms(self.X[i], self.f[i], transpose=True)
                if len(siblings) == 1:
                    for r in range(6):
                        b.lincomb(self.f[p][r], rows[r], accumulate=True)
                else:
                    xtf = b.vec_assign(self.seg_vec("xtf", i), rows)
                    gather.setdefault(p, []).append(xtf)
            if gather:
                b.phase(f"{label}_gather_{lv}")
                for p, contribs in sorted(gather.items()):
                    b.item()
                    for r in range(6):
                        b.lincomb(self.f[p][r],
                                  [(+1, xtf[r], 1.0) for xtf in contribs],
                                  accumulate=True)

    # ---- mass matrix inverse ------------------------------------------------
    def minv_entry(self, i, j):
        return self.minv_grid.get((min(i, j), max(i, j)))

    def emit_minv(self, out_seg):
        b = self.b
        lay = self.layout
        model = self.model
        resp = self.cols  # minv_response pattern

        b.phase("ia_init")
        IA = []
        for i in range(self.nf):
            b.item()
            grid = [[lay.addr("IA", i, r, c) for c in range(6)] for r in range(6)]
            for r in range(6):
                for c in range(6):
                    if self.I[i][r][c] != 0.0:
                        b._cur.append((ir.CONST, grid[r][c], self.I[i][r][c]))
            IA.append(grid)

        F = {}  # (i, j) -> slot vec, zero until first written

        def fvec(i, j):
            key = (i, j)
            if key not in F:
                F[key] = _entry_vec(lay, "F", resp.offset("minv_response", i, j))
            return F[key]

        U = [self.seg_vec("U", i) for i in range(self.nf)]
        udinv = [self.seg_vec("udinv", i) for i in range(self.nf)]
        Dinv = [lay.addr("Dinv", i) for i in range(self.nf)]
        ia_tmp = [[[lay.addr("ia_tmp", i, r, c) for c in range(6)] for r in range(6)]
                  for i in range(self.nf)]
        ia_x = [[[lay.addr("ia_x", i, r, c) for c in range(6)] for r in range(6)]
                for i in range(self.nf)]

        for lv in range(self.sched.depth - 1, -1, -1):
            frames = self.sched.levels[lv]
            b.phase(f"minv_bwd_{lv}")
            for i in frames:
                b.item()
                S = self.S[i]
                for r in range(6):
                    b.lincomb(U[i][r], [(+1, IA[i][r][k], S[k]) for k in range(6)], pin=True)
                b.lincomb(Dinv[i], [(+1, U[i][k], S[k]) for k in range(6)], pin=True)
                b._cur.append((ir.RECIP, Dinv[i], Dinv[i]))
                for r in range(6):
                    b._cur.append((ir.MUL, udinv[i][r], U[i][r], Dinv[i]))
                b.copy(lay.addr(out_seg, i, i), Dinv[i])
                self.minv_grid[(i, i)] = lay.addr(out_seg, i, i)
                p = model.parent[i]
                if p != -1:
                    # articulated inertia handed to the parent, times X
                    for r in range(6):
                        for c in range(6):
                            t = ia_tmp[i][r][c]
                            b._cur.append((ir.MUL, t, U[i][r], udinv[i][c]))
                            b._cur.append((ir.NEG, t, t))
                            b._cur.append((ir.ADD, t, t, IA[i][r][c]))
            b.phase(f"minv_bwd_rows_{lv}")
            for i in frames:
                for j in model.subtree(i):
                    if j == i:
                        continue
                    b.item()
                    slot = lay.addr(out_seg, i, j)
                    b.lincomb(slot, [(+1, fvec(i, j)[k], self.S[i][k]) for k in range(6)],
                              pin=True)
                    b._cur.append((ir.MUL, slot, slot, Dinv[i]))
                    b._cur.append((ir.NEG, slot, slot))
                    self.minv_grid[(i, j)] = slot
            if any(model.parent[i] != -1 for i in frames):
                b.phase(f"minv_bwd_iax_{lv}")
                for i in frames:
                    if model.parent[i] == -1:
                        continue
                    for c in range(6):
                        b.item()
                        for r in range(6):
                            b.lincomb(ia_x[i][r][c],
                                      [(+1, ia_tmp[i][r][k], self.X[i][k][c])
                                       for k in range(6)],
                                      pin=True)
                b.phase(f"minv_xfer_{lv}")
                parents = sorted({model.parent[i] for i in frames if model.parent[i] != -1})
                for p in parents:
                    kids = model.children(p)  # all children of p sit at this level
                    cols = sorted({j for c in kids for j in model.subtree(c)})
                    for j in cols:
                        b.item()
                        target = fvec(p, j)
                        contrib = []
                        for c in kids:
                            if j not in model.subtree(c):
                                continue
                            ft = _entry_vec(lay, "ftmp", resp.offset("minv_response", c, j))
                            for k in range(6):
                                b.lincomb(ft[k], [(+1, U[c][k], self.minv_entry(c, j)),
                                                  (+1, fvec(c, j)[k], 1.0)], pin=True)
                            contrib.append((c, ft))
                        for r in range(6):
                            terms = []
                            for c, ft in contrib:
                                terms.extend([(+1, self.X[c][k][r], ft[k])
                                              for k in range(6)])
                            b.lincomb(target[r], terms, accumulate=True)
                    for cc in range(6):
                        b.item()
                        for r in range(6):
                            terms = []
                            for c in kids:
                                terms.extend([(+1, self.X[c][k][r], ia_x[c][k][cc])
                                              for k in range(6)])
                            b.lincomb(IA[p][r][cc], terms, accumulate=True)

        for lv, frames in enumerate(self.sched.levels):
            b.phase(f"minv_fwd_{lv}")
            for i in frames:
                p = self.model.parent[i]
                for (fi, j) in resp.pairs("minv_response"):
                    if fi != i:
                        continue
                    b.item()
                    if p == -1:
                        mv = self.minv_entry(i, j)
                        for r in range(6):
                            b.lincomb(fvec(i, j)[r], [(+1, mv, self.S[i][r])], pin=True)
                    else:
                        ft = _entry_vec(lay, "ftmp", resp.offset("minv_response", i, j))
                        for r in range(6):
                            b.lincomb(ft[r],
                                      [(+1, self.X[i][r][k], fvec(p, j)[k]) for k in range(6)],
                                      pin=True)
                        macc = lay.addr("macc", resp.offset("minv_response", i, j))
                        b.lincomb(macc, [(+1, U[i][k], ft[k]) for k in range(6)], pin=True)
                        b._cur.append((ir.MUL, macc, macc, Dinv[i]))
                        b._cur.append((ir.NEG, macc, macc))
                        mslot = lay.addr(out_seg, i, j)
                        if (i, j) not in self.minv_grid:  # untouched by the backward pass
                            self.minv_grid[(i, j)] = mslot
                        b._cur.append((ir.ADD, mslot, mslot, macc))
                        for r in range(6):
                            b.lincomb(fvec(i, j)[r],
                                      [(+1, self.minv_entry(i, j), self.S[i][r]),
                                       (+1, ft[r], 1.0)], pin=True)

    def emit_minv_symmetrize(self, out_seg):
        b = self.b
        b.phase("minv_sym")
        for (i, j) in self.cols.pairs("minv_response"):
            if i == j:
                continue
            b.item()
            b.copy(self.layout.addr(out_seg, j, i), self.minv_entry(i, j))

    # ---- gradients ------------------------------------------------------------
    def emit_grad(self, out_dq, out_dqd):
        b = self.b
        lay = self.layout
        model = self.model
        carry = self.cols
        S = self.S

        xv = [None] * self.nf
        xa = [None] * self.nf
        mxXv = [None] * self.nf
        mxXa = [None] * self.nf
        mxv = [None] * self.nf
        xcf = [None] * self.nf

        b.phase("grad_prep")
        for i in range(self.nf):
            b.item()
            p = model.parent[i]
            if p == -1:
                xv[i] = [None] * 6
                xa[i] = b.vec_assign(self.seg_vec("xa", i),
                                     b.matvec_terms(self.X[i], self.a0))
            else:
                xv[i] = b.vec_assign(self.seg_vec("xv", i),
                                     b.matvec_terms(self.X[i], self.v[p]))
                xa[i] = b.vec_assign(self.seg_vec("xa", i),
                                     b.matvec_terms(self.X[i], self.a[p]))
            mxXv[i] = b.vec_assign(self.seg_vec("mxXv", i),
                                   b.cross_terms(_CRM_PAT, xv[i], S[i]))
            mxXa[i] = b.vec_assign(self.seg_vec("mxXa", i),
                                   b.cross_terms(_CRM_PAT, xa[i], S[i]))
            mxv[i] = b.vec_assign(self.seg_vec("mxv", i),
                                  b.cross_terms(_CRM_PAT, self.v[i], S[i]))
            if p != -1:
                sf = b.vec_assign(self.seg_vec("sf", i),
                                  b.cross_terms(_CRF_PAT, S[i], self.f[i]))
                xcf[i] = b.vec_assign(self.seg_vec("xcf", i),
                                      b.matvec_terms(self.X[i], sf, transpose=True))
            if not self.fused:
                self.fxvI[i] = [[b.lincomb(lay.addr("fxvI", i, r, c),
                                           [(+1, self.crf_g[i][r][k], self.I[i][k][c])
                                            for k in range(6)])
                                 for c in range(6)] for r in range(6)]

        def dv(kind, i, col):
            return self.grad[("dv", kind, i, col)]

        def da(kind, i, col):
            return self.grad[("da", kind, i, col)]

        def df(kind, i, col):
            key = ("df", kind, i, col)
            if key not in self.grad:
                seg = "df_dq" if kind == "dq" else "df_dqd"
                self.grad[key] = _entry_vec(lay, seg, carry.offset("grad_transport", i, col))
            return self.grad[key]

        for lv, frames in enumerate(self.sched.levels):
            b.phase(f"grad_dv_{lv}")
            for i in frames:
                p = model.parent[i]
                for col in carry.cols("grad_carry", i):
                    for kind in ("dq", "dqd"):
                        if col == i:
                            if kind == "dq":
                                self.grad[("dv", kind, i, col)] = mxXv[i]
                            else:
                                self.grad[("dv", kind, i, col)] = [
                                    s if s != 0.0 else None for s in S[i]]
                            continue
                        b.item()
                        seg = "dv_dq" if kind == "dq" else "dv_dqd"
                        slots = _entry_vec(lay, seg, carry.offset("grad_carry", i, col))
                        self.grad[("dv", kind, i, col)] = b.vec_assign(
                            slots, b.matvec_terms(self.X[i], dv(kind, p, col)))
            b.phase(f"grad_da_{lv}")
            for i in frames:
                p = model.parent[i]
                for col in carry.cols("grad_carry", i):
                    for kind in ("dq", "dqd"):
                        b.item()
                        rows = [[] for _ in range(6)]
                        if p != -1 and col != i:
                            rows = b.matvec_terms(self.X[i], da(kind, p, col))
                        cr = b.cross_terms(_CRM_PAT, dv(kind, i, col), self.vJ[i])
                        for r in range(6):
                            rows[r].extend(cr[r])
                        if col == i:
                            delta = mxXa[i] if kind == "dq" else mxv[i]
                            for r in range(6):
                                rows[r].append((+1, delta[r], 1.0))
                        seg = "da_dq" if kind == "dq" else "da_dqd"
                        slots = _entry_vec(lay, seg, carry.offset("grad_carry", i, col))
                        self.grad[("da", kind, i, col)] = b.vec_assign(slots, rows)

        for kind in ("dq", "dqd"):
            b.phase(f"grad_df_{kind}")
            for i in range(self.nf):
                Ic = self.I[i]
                for col in carry.cols("grad_carry", i):
                    b.item()
                    dvv = dv(kind, i, col)
                    rows = [[(+1, da(kind, i, col)[k], Ic[r][k]) for k in range(6)]
                            for r in range(6)]
                    cr = b.cross_terms(_CRF_PAT, dvv, self.Iv[i])
                    for r in range(6):
                        rows[r].extend(cr[r])
                    if self.fused:
                        idv = b.vec_assign(
                            _entry_vec(lay, "idv", carry.offset("grad_carry", i, col)),
                            [[(+1, dvv[k], Ic[r][k]) for k in range(6)] for r in range(6)])
                        cv = b.cross_terms(_CRF_PAT, self.v[i], idv)
                        for r in range(6):
                            rows[r].extend(cv[r])
                    else:
                        for r in range(6):
                            rows[r].extend([(+1, self.fxvI[i][r][k], dvv[k])
                                            for k in range(6)])
                    b.vec_assign(df(kind, i, col), rows, pin=True)

        for lv in range(self.sched.depth - 1, 0, -1):
            b.phase(f"grad_bwd_{lv}")
            parents = sorted({model.parent[i] for i in self.sched.levels[lv]})
            for p in parents:
                kids = [c for c in model.children(p) if self.sched.level_of[c] == lv]
                cols = sorted({col for c in kids for col in carry.cols("grad_transport", c)})
                for col in cols:
                    for kind in ("dq", "dqd"):
                        b.item()
                        target = df(kind, p, col)
                        for r in range(6):
                            terms = []
                            for c in kids:
                                if not carry.has("grad_transport", c, col):
                                    continue
                                terms.extend([(+1, self.X[c][k][r], df(kind, c, col)[k])
                                              for k in range(6)])
                                if kind == "dq" and col == c:
                                    terms.append((+1, xcf[c][r], 1.0))
                            b.lincomb(target[r], terms, accumulate=True)

        b.phase("grad_out")
        for i in range(self.nf):
            for col in carry.cols("grad_transport", i):
                for kind, seg in (("dq", out_dq), ("dqd", out_dqd)):
                    b.item()
                    b.lincomb(lay.addr(seg, i, col),
                              [(+1, df(kind, i, col)[k], S[i][k]) for k in range(6)],
                              pin=True)

    # ---- per-algorithm drivers -------------------------------------------------
    def run(self):
        alg = self.alg
        if alg == "ID":
            self.emit_xforms(with_vel=True)
            self.emit_forward(lambda i: self.layout.addr("qdd", i))
            self.emit_body_force()
            self.emit_backward_force("tau_out")
        elif alg == "Minv":
            self.emit_xforms(with_vel=False)
            self.emit_minv("minv_out")
            self.emit_minv_symmetrize("minv_out")
        elif alg == "FD":
            self.emit_xforms(with_vel=True)
            self.emit_forward(lambda i: None)
            self.emit_body_force()
            self.emit_backward_force("cbias")
            self.emit_minv("minv")
            self._emit_fd_solve("qdd_out")
        elif alg == "gradID":
            self.emit_xforms(with_vel=True)
            self.emit_forward(lambda i: self.layout.addr("qdd", i))
            self.emit_body_force()
            self.emit_backward_force(None)
            self.emit_grad("dq_out", "dqd_out")
        elif alg == "gradFD":
            self.emit_xforms(with_vel=True)
            self.emit_forward(lambda i: None)
            self.emit_body_force()
            self.emit_backward_force("cbias")
            self.emit_minv("minv")
            self._emit_fd_solve("qdd_out")
            # re-run the acceleration sweep at the solved joint accelerations
            self.emit_forward(lambda i: self.layout.addr("qdd_out", i),
                              label="accel", accel_only=True)
            self.emit_body_force(label="body_force_2")
            self.emit_backward_force(None, label="bwd2")
            self.emit_grad("dcq", "dcqd")
            self._emit_fdgrad_out()
        else:
            raise GenerationError(f"unsupported algorithm {alg!r}")

        meta = {
            "model": self.model.name,
            "algorithm": alg,
            "n_dof": str(self.n),
            "n_frames": str(self.nf),
            "fused_cross": "1" if self.fused else "0",
            "topology": classify_topology(self.model),
        }
        return self.b.finalize(self.layout.total_size, self.layout.input_map,
                               self.layout.output_map, meta)

    def _emit_fd_solve(self, qdd_seg):
        b = self.b
        lay = self.layout
        b.phase("fd_umc")
        for j in range(self.n):
            b.item()
            b._cur.append((ir.SUB, lay.addr("umc", j), lay.addr("tau", j),
                           lay.addr("cbias", j)))
        b.phase("fd_qdd")
        for i in range(self.n):
            b.item()
            b.lincomb(lay.addr(qdd_seg, i),
                      [(+1, self.minv_entry(i, j), lay.addr("umc", j))
                       for j in range(self.n) if self.minv_entry(i, j) is not None],
                      pin=True)

    def _emit_fdgrad_out(self):
        b = self.b
        lay = self.layout
        b.phase("fdgrad_out")
        for kind, src, dst in (("dq", "dcq", "dq_out"), ("dqd", "dcqd", "dqd_out")):
            for i in range(self.n):
                for col in range(self.n):
                    b.item()
                    terms = []
                    for j in range(self.n):
                        mv = self.minv_entry(i, j)
                        if mv is None or not self.cols.has("grad_transport", j, col):
                            continue
                        terms.append((-1, mv, lay.addr(src, j, col)))
                    b.lincomb(lay.addr(dst, i, col), terms, pin=True)


def generate_kernel(model, algorithm, schedule, layout):
    """Generate the straight-line kernel for one algorithm on one robot.

    schedule/layout must come from build_levels/plan_workspace for the same
    model and algorithm.
    """
    if layout.algorithm != algorithm:
        raise GenerationError(
            f"layout was planned for {layout.algorithm!r}, not {algorithm!r}")
    if layout.model_name != model.name:
        raise GenerationError(
            f"layout was planned for model {layout.model_name!r}, not {model.name!r}")
    if schedule.level_of and len(schedule.level_of) != model.n_frames:
        raise GenerationError("schedule does not match the model")
    return _Gen(model, algorithm, schedule, layout).run()


def build(model, algorithm, budget=None):
    """Convenience pipeline: schedule, sparsity, layout, kernel."""
    from .schedule import DEFAULT_BUDGET
    sched = build_levels(model)
    cols = analyze_sparsity(model, algorithm)
    layout = plan_workspace(model, algorithm, cols,
                            DEFAULT_BUDGET if budget is None else budget)
    return generate_kernel(model, algorithm, sched, layout), sched, layout
