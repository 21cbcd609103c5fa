"""Straight-line, barrier-phased, data-parallel kernel IR.

A program is a flat scalar arena plus an ordered list of phases.  Each phase
holds work items that may execute concurrently; a full barrier separates
phases.  Work items are straight-line instruction lists -- no control flow
exists in the IR, and data-dependent selection must go through the `select`
op (flag*a + (1-flag)*b).

Instructions are tuples (op, dst, ...) over arena slot indices:

    (CONST, dst, imm)        dst = imm
    (ADD,   dst, a, b)       dst = arena[a] + arena[b]
    (SUB,   dst, a, b)       dst = arena[a] - arena[b]
    (MUL,   dst, a, b)       dst = arena[a] * arena[b]
    (FMA,   dst, a, b, c)    dst = arena[a]*arena[b] + arena[c]
    (NEG,   dst, a)          dst = -arena[a]
    (SIN,   dst, a)          dst = sin(arena[a])
    (COS,   dst, a)          dst = cos(arena[a])
    (RECIP, dst, a)          dst = 1/arena[a]
    (SELECT,dst, f, a, b)    dst = arena[f]*arena[a] + (1-arena[f])*arena[b],
                             arena[f] must be exactly 0 or 1 at runtime

The arena starts zero-filled on every run; inputs are copied into their
segments before phase 0.
"""

from dataclasses import dataclass, field

FMA, MUL, ADD, SUB, NEG, CONST, SIN, COS, RECIP, SELECT = range(10)

OP_NAMES = {FMA: "fma", MUL: "mul", ADD: "add", SUB: "sub", NEG: "neg",
            CONST: "load_const", SIN: "sin", COS: "cos", RECIP: "recip",
            SELECT: "select"}
OP_CODES = {v: k for k, v in OP_NAMES.items()}

# slot-operand positions per op (dst is always position 1)
_SRC_POS = {FMA: (2, 3, 4), MUL: (2, 3), ADD: (2, 3), SUB: (2, 3),
            NEG: (2,), CONST: (), SIN: (2,), COS: (2,), RECIP: (2,),
            SELECT: (2, 3, 4)}
_ARITY = {FMA: 5, MUL: 4, ADD: 4, SUB: 4, NEG: 3, CONST: 3, SIN: 3,
          COS: 3, RECIP: 3, SELECT: 5}


def instr_sources(ins):
    return [ins[k] for k in _SRC_POS[ins[0]]]


@dataclass
class Phase:
    label: str
    items: list  # list of work items; a work item is a list of instr tuples

    @property
    def n_instrs(self):
        return sum(len(it) for it in self.items)


@dataclass
class KernelProgram:
    arena_size: int
    input_map: dict  # name -> (offset, extent)
    output_map: dict  # name -> (offset, extent)
    phases: list
    meta: dict = field(default_factory=dict)

    @property
    def n_instrs(self):
        return sum(p.n_instrs for p in self.phases)

    @property
    def max_items(self):
        return max(len(p.items) for p in self.phases)


class ProgramValidationError(ValueError):
    pass


def validate_program(program):
    """Structural checks: non-empty phase list, known ops, slot ranges."""
    if not program.phases:
        raise ProgramValidationError("program has no phases")
    size = program.arena_size
    for name, (off, ext) in list(program.input_map.items()) + list(program.output_map.items()):
        if not (0 <= off and off + ext <= size):
            raise ProgramValidationError(f"segment {name!r} outside arena")
    for pi, phase in enumerate(program.phases):
        for wi, item in enumerate(phase.items):
            for ins in item:
                op = ins[0]
                if op not in _ARITY:
                    raise ProgramValidationError(f"phase {pi} item {wi}: unknown op {op}")
                if len(ins) != _ARITY[op]:
                    raise ProgramValidationError(f"phase {pi} item {wi}: bad arity {ins}")
                slots = [ins[1]] + instr_sources(ins) if op != CONST else [ins[1]]
                for s in slots:
                    if not (0 <= s < size):
                        raise ProgramValidationError(
                            f"phase {pi} item {wi}: slot {s} outside arena of {size}")


@dataclass
class RaceViolation:
    phase: int
    slot: int
    writer_item: int
    other_item: int
    kind: str  # write-write | write-read

    def __str__(self):
        return (f"phase {self.phase}: slot {self.slot} written by item "
                f"{self.writer_item} and {'written' if self.kind == 'write-write' else 'read'} "
                f"by item {self.other_item}")


def check_races(program):
    """Statically verify phase race-freedom.

    Within one phase no slot may be written by one work item and read or
    written by another; the between-phase barrier is the only ordering.
    Returns the (empty when clean) list of violations.
    """
    violations = []
    for pi, phase in enumerate(program.phases):
        writers = {}  # slot -> first writing item
        readers = {}  # slot -> {items reading it}
        for wi, item in enumerate(phase.items):
            for ins in item:
                for s in instr_sources(ins):
                    readers.setdefault(s, set()).add(wi)
                writers.setdefault(ins[1], wi)
        for wi, item in enumerate(phase.items):
            seen = set()
            for ins in item:
                s = ins[1]
                if s in seen:
                    continue
                seen.add(s)
                w0 = writers[s]
                if w0 != wi:
                    violations.append(RaceViolation(pi, s, w0, wi, "write-write"))
                for rd in readers.get(s, ()):
                    if rd != wi:
                        violations.append(RaceViolation(pi, s, wi, rd, "write-read"))
    return violations


def control_flow_instructions(program):
    """Ops that would constitute control flow.  The IR has none by
    construction; this scan makes the branch-freedom claim auditable."""
    allowed = set(OP_NAMES)
    bad = []
    for pi, phase in enumerate(program.phases):
        for wi, item in enumerate(phase.items):
            for ins in item:
                if ins[0] not in allowed:
                    bad.append((pi, wi, ins))
    return bad


FORMAT_VERSION = 1


def dump_text(program):
    """Stable text serialization (golden-file friendly)."""
    out = [f"rbdkernel v{FORMAT_VERSION}"]
    meta = " ".join(f"{k}={program.meta[k]}" for k in sorted(program.meta))
    out.append(f"meta {meta}")
    out.append(f"arena {program.arena_size}")
    for name, (off, ext) in program.input_map.items():
        out.append(f"input {name} {off} {ext}")
    for name, (off, ext) in program.output_map.items():
        out.append(f"output {name} {off} {ext}")
    for phase in program.phases:
        out.append(f"phase {phase.label}")
        for item in phase.items:
            out.append("item")
            for ins in item:
                if ins[0] == CONST:
                    out.append(f"  load_const {ins[1]} {ins[2]!r}")
                else:
                    out.append(f"  {OP_NAMES[ins[0]]} " + " ".join(str(x) for x in ins[1:]))
    return "\n".join(out) + "\n"


def load_text(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("rbdkernel v"):
        raise ProgramValidationError("not a kernel dump")
    version = int(lines[0].split("v")[1])
    if version != FORMAT_VERSION:
        raise ProgramValidationError(f"unsupported kernel format version {version}")
    meta = {}
    arena = 0
    inputs, outputs = {}, {}
    phases = []
    item = None
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        if line.startswith("  "):
            op = OP_CODES[parts[0]]
            if op == CONST:
                item.append((CONST, int(parts[1]), float(parts[2])))
            else:
                item.append((op, *map(int, parts[1:])))
        elif parts[0] == "meta":
            for kv in parts[1:]:
                k, v = kv.split("=", 1)
                meta[k] = v
        elif parts[0] == "arena":
            arena = int(parts[1])
        elif parts[0] == "input":
            inputs[parts[1]] = (int(parts[2]), int(parts[3]))
        elif parts[0] == "output":
            outputs[parts[1]] = (int(parts[2]), int(parts[3]))
        elif parts[0] == "phase":
            phases.append(Phase(parts[1], []))
        elif parts[0] == "item":
            item = []
            phases[-1].items.append(item)
        else:
            raise ProgramValidationError(f"bad dump line: {line!r}")
    prog = KernelProgram(arena, inputs, outputs, phases, meta)
    validate_program(prog)
    return prog
