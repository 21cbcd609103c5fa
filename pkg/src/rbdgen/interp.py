"""Multi-threaded interpreter for kernel programs.

Stands in for a GPU thread block: each phase's work items run across a
caller-chosen number of workers with a full barrier between phases.  Because
generated phases are race-free and every instruction is a pure function of
arena slots, the result is identical for any worker count; thread_count=1 is
the sequential oracle the parallel paths are checked against.
"""

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ir import ADD, CONST, COS, FMA, MUL, NEG, RECIP, SELECT, SIN, SUB


class InterpreterError(ValueError):
    pass


def _run_item(arena, item):
    sin = math.sin
    cos = math.cos
    for ins in item:
        op = ins[0]
        if op == FMA:
            arena[ins[1]] = arena[ins[2]] * arena[ins[3]] + arena[ins[4]]
        elif op == MUL:
            arena[ins[1]] = arena[ins[2]] * arena[ins[3]]
        elif op == ADD:
            arena[ins[1]] = arena[ins[2]] + arena[ins[3]]
        elif op == SUB:
            arena[ins[1]] = arena[ins[2]] - arena[ins[3]]
        elif op == NEG:
            arena[ins[1]] = -arena[ins[2]]
        elif op == CONST:
            arena[ins[1]] = ins[2]
        elif op == SIN:
            arena[ins[1]] = sin(arena[ins[2]])
        elif op == COS:
            arena[ins[1]] = cos(arena[ins[2]])
        elif op == RECIP:
            arena[ins[1]] = 1.0 / arena[ins[2]]
        elif op == SELECT:
            flag = arena[ins[2]]
            if flag != 0.0 and flag != 1.0:
                raise InterpreterError(f"select flag in slot {ins[2]} is {flag!r}, not 0 or 1")
            arena[ins[1]] = flag * arena[ins[3]] + (1.0 - flag) * arena[ins[4]]
        else:
            raise InterpreterError(f"unknown opcode {op}")


def interpret(program, inputs, thread_count=1):
    """Run a kernel over one input set; returns named output arrays.

    inputs maps each input segment name to a sequence matching its extent.
    """
    if thread_count < 1:
        raise InterpreterError("thread_count must be positive")
    arena = [0.0] * program.arena_size

    expected = set(program.input_map)
    got = set(inputs)
    if got != expected:
        raise InterpreterError(f"inputs {sorted(got)} do not match program inputs {sorted(expected)}")
    for name, (off, ext) in program.input_map.items():
        vals = np.asarray(inputs[name], dtype=float).ravel()
        if vals.size != ext:
            raise InterpreterError(f"input {name!r} has {vals.size} values, expected {ext}")
        arena[off:off + ext] = vals.tolist()

    if thread_count == 1:
        for phase in program.phases:
            for item in phase.items:
                _run_item(arena, item)
    else:
        with ThreadPoolExecutor(max_workers=thread_count) as pool:
            for phase in program.phases:
                # list() drains the iterator: the barrier between phases
                list(pool.map(lambda it: _run_item(arena, it), phase.items))

    out = {}
    for name, (off, ext) in program.output_map.items():
        out[name] = np.array(arena[off:off + ext])
    return out
