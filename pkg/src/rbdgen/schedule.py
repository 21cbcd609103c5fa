"""Robot-topology analysis feeding kernel generation.

Three products: the breadth-first level partition of the kinematic tree (the
serial loops of the dynamics sweeps run level by level, every frame within a
level in parallel), the structural sparsity map of per-frame/per-column
temporaries (columns that are provably zero for all inputs are dropped and
the survivors packed with offsets fixed here, before any code is emitted),
and the flat workspace layout with a scalar-slot budget.  When the full
layout (which materializes per-frame 6x6 cross-product operator matrices)
exceeds the budget, a reduced layout is returned that evaluates those
products in fused form instead.
"""

import json
from dataclasses import dataclass, field

ALGORITHMS = ("ID", "Minv", "FD", "gradID", "gradFD")

# Scalar slots; roughly a contemporary GPU's per-block shared memory in
# double-precision terms (224 KiB).
DEFAULT_BUDGET = 28672


class InfeasibleBudgetError(ValueError):
    """Budget below the smallest (reduced) layout; carries the floor size."""

    def __init__(self, budget, floor):
        super().__init__(f"budget of {budget} scalar slots is below the "
                         f"minimal feasible layout of {floor} slots")
        self.budget = budget
        self.floor = floor


@dataclass
class LevelSchedule:
    levels: list  # frames per tree depth, ascending within each level
    level_of: list  # depth per frame

    @property
    def depth(self):
        return len(self.levels)


def build_levels(model):
    """Partition frames by tree depth.  Forward sweeps run the levels in
    order, backward sweeps reversed; frames within a level never depend on
    each other."""
    level_of = []
    for i in range(model.n_frames):
        p = model.parent[i]
        level_of.append(0 if p == -1 else level_of[p] + 1)
    levels = [[] for _ in range(max(level_of, default=-1) + 1)]
    for i, lv in enumerate(level_of):
        levels[lv].append(i)
    return LevelSchedule(levels, level_of)


def _ancestry(model):
    anc = []
    for i in range(model.n_frames):
        a = set(model.ancestors(i))
        a.add(i)
        anc.append(a)
    return anc


@dataclass
class ColumnMap:
    """Retained (frame, column) pairs per temporary class, with the packed
    offsets used by generated code.

    Classes:
      grad_carry      outward-propagated gradient temporaries (dv, da and the
                      forward part of df): column j survives at frame i iff
                      joint j is an ancestor-or-self of i.
      grad_transport  inward-accumulated df: ancestor-or-self plus the
                      frame's subtree (wrench derivatives gathered from
                      descendants pass through here).
      minv_response   per-frame response columns of the mass-matrix inverse
                      recursion: j >= i within the same connected tree.
    """
    n_frames: int
    n_dof: int
    patterns: dict = field(default_factory=dict)  # class -> sorted (frame, col) pairs
    offsets: dict = field(default_factory=dict)  # class -> {(frame, col): packed index}

    def add(self, cls, pairs):
        pairs = sorted(pairs)
        self.patterns[cls] = pairs
        self.offsets[cls] = {pc: k for k, pc in enumerate(pairs)}

    def pairs(self, cls):
        return self.patterns[cls]

    def count(self, cls):
        return len(self.patterns[cls])

    def offset(self, cls, frame, col):
        return self.offsets[cls][(frame, col)]

    def cols(self, cls, frame):
        return [c for (f, c) in self.patterns[cls] if f == frame]

    def has(self, cls, frame, col):
        return (frame, col) in self.offsets.get(cls, {})

    def retained_fraction(self):
        """Retained share of the gradient temporaries against dense
        (n_frames x n_dof per temporary class)."""
        classes = [c for c in ("grad_carry", "grad_transport") if c in self.patterns]
        if not classes:
            return 1.0
        dense = self.n_frames * self.n_dof * len(classes)
        return sum(len(self.patterns[c]) for c in classes) / dense


def analyze_sparsity(model, algorithm):
    """Structural reachability analysis for one algorithm's temporaries.

    Purely topological, so a dropped column is zero for every input, not just
    the ones sampled in tests.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    n = model.n_frames
    cmap = ColumnMap(n, model.n_dof)
    anc = _ancestry(model)
    if algorithm in ("gradID", "gradFD"):
        carry = [(i, j) for i in range(n) for j in sorted(anc[i])]
        transport = [(i, j) for i in range(n)
                     for j in sorted(anc[i] | set(model.subtree(i)))]
        cmap.add("grad_carry", carry)
        cmap.add("grad_transport", transport)
    if algorithm in ("Minv", "FD", "gradFD"):
        root_of = [min(a) for a in (sorted(anc[i]) for i in range(n))]
        resp = [(i, j) for i in range(n) for j in range(i, n)
                if root_of[i] == root_of[j]]
        cmap.add("minv_response", resp)
    return cmap


@dataclass
class Segment:
    name: str
    offset: int
    shape: tuple
    role: str  # input | output | temp | const

    @property
    def extent(self):
        k = 1
        for s in self.shape:
            k *= s
        return k


@dataclass
class WorkspaceLayout:
    model_name: str
    algorithm: str
    segments: dict  # name -> Segment, in allocation order
    total_size: int
    budget: int
    fused_cross: bool

    def segment(self, name):
        return self.segments[name]

    def addr(self, name, *idx):
        seg = self.segments[name]
        assert len(idx) == len(seg.shape)
        k = 0
        for i, s in zip(idx, seg.shape):
            assert 0 <= i < s, (name, idx, seg.shape)
            k = k * s + i
        return seg.offset + k

    @property
    def input_map(self):
        return {s.name: (s.offset, s.extent)
                for s in self.segments.values() if s.role == "input"}

    @property
    def output_map(self):
        return {s.name: (s.offset, s.extent)
                for s in self.segments.values() if s.role == "output"}


def _build_layout(model, algorithm, columns, budget, fused):
    nf = model.n_frames
    n = model.n_dof
    segs = {}
    cursor = 0

    def seg(name, shape, role="temp"):
        nonlocal cursor
        if isinstance(shape, int):
            shape = (shape,)
        s = Segment(name, cursor, shape, role)
        segs[name] = s
        cursor += s.extent
        return s

    grad = algorithm in ("gradID", "gradFD")
    minv = algorithm in ("Minv", "FD", "gradFD")
    rnea = algorithm != "Minv"

    seg("q", n, "input")
    if rnea:
        seg("qd", n, "input")
    if algorithm in ("ID", "gradID"):
        seg("qdd", n, "input")
    elif algorithm in ("FD", "gradFD"):
        seg("tau", n, "input")

    if algorithm == "ID":
        seg("tau_out", n, "output")
    elif algorithm == "Minv":
        seg("minv_out", (n, n), "output")
    elif algorithm == "FD":
        seg("qdd_out", n, "output")
    else:
        seg("dq_out", (n, n), "output")
        seg("dqd_out", (n, n), "output")
        if algorithm == "gradFD":
            seg("qdd_out", n, "output")

    # worst-case per-frame constants: folded transform coefficients,
    # translations, and the nonzero inertia entries (deduplicated at
    # emission; this reserves the bound)
    seg("const", 80 * nf + 16, "const")
    seg("sincos", (nf, 2))
    if any(j.kind == "prismatic" for j in model.joints):
        seg("jr", (nf, 3))
    seg("X", (nf, 6, 6))

    if rnea:
        for nm in ("vJ", "v", "a", "f", "Iv", "xtf"):
            seg(nm, (nf, 6))
        if not fused:
            seg("crm_v", (nf, 6, 6))

    if minv:
        for nm in ("U", "udinv"):
            seg(nm, (nf, 6))
        seg("Dinv", nf)
        for nm in ("IA", "ia_tmp", "ia_x"):
            seg(nm, (nf, 6, 6))
        nresp = columns.count("minv_response")
        seg("F", (nresp, 6))
        seg("ftmp", (nresp, 6))
        seg("macc", nresp)
        if algorithm != "Minv":
            seg("minv", (n, n))

    if algorithm in ("FD", "gradFD"):
        seg("cbias", n)
        seg("umc", n)

    if grad:
        for nm in ("xv", "xa", "mxXv", "mxXa", "mxv", "sf", "xcf"):
            seg(nm, (nf, 6))
        ncarry = columns.count("grad_carry")
        ntrans = columns.count("grad_transport")
        for nm in ("dv_dq", "dv_dqd", "da_dq", "da_dqd"):
            seg(nm, (ncarry, 6))
        for nm in ("df_dq", "df_dqd"):
            seg(nm, (ntrans, 6))
        if not fused:
            seg("fxvI", (nf, 6, 6))
        else:
            seg("idv", (ncarry, 6))
        if algorithm == "gradFD":
            seg("dcq", (n, n))
            seg("dcqd", (n, n))

    return WorkspaceLayout(model.name, algorithm, segs, cursor, budget, fused)


def plan_workspace(model, algorithm, columns, budget=DEFAULT_BUDGET):
    """Pick the largest layout that fits the slot budget.

    Full layouts keep the 6x6 cross-product operator matrices of each frame
    (and, for gradients, the crf(v) I product) as addressable temporaries so
    their applications are plain row dot products; the reduced fallback
    drops them and fuses each application into a handful of multiply-adds,
    trading instructions for workspace.
    """
    full = _build_layout(model, algorithm, columns, budget, fused=False)
    if full.total_size <= budget:
        return full
    reduced = _build_layout(model, algorithm, columns, budget, fused=True)
    if reduced.total_size <= budget:
        return reduced
    raise InfeasibleBudgetError(budget, reduced.total_size)


def schedule_text(schedule):
    lines = [f"levels: {schedule.depth}"]
    for k, frames in enumerate(schedule.levels):
        lines.append(f"  level {k}: frames {frames}")
    return "\n".join(lines)


def schedule_records(schedule):
    return [{"level": k, "frames": frames} for k, frames in enumerate(schedule.levels)]


def layout_text(layout):
    lines = [f"workspace for {layout.algorithm} on {layout.model_name}: "
             f"{layout.total_size} slots (budget {layout.budget}, "
             f"{'fused' if layout.fused_cross else 'full'} cross products)"]
    for s in layout.segments.values():
        shape = "x".join(map(str, s.shape))
        lines.append(f"  {s.name:10s} {s.role:6s} offset {s.offset:6d} extent {s.extent:6d} ({shape})")
    return "\n".join(lines)


def layout_records(layout):
    recs = [{"segment": s.name, "role": s.role, "offset": s.offset,
             "extent": s.extent, "shape": list(s.shape)}
            for s in layout.segments.values()]
    return recs


def dump_records_json(records):
    return "\n".join(json.dumps(r, sort_keys=True) for r in records)
