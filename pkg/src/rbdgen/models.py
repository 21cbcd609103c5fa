"""Bundled test robots, generated as URDF text.

A complexity ladder of fabricated models: a single link, a planar two-link
pendulum, a 7-dof serial arm, a 12-dof four-limb (quadruped-like) tree, and a
30-dof branched (humanoid-like) tree.  `tree7` reproduces a 7-frame topology
with branches at several depths, and `mixed5` mixes prismatic joints and
off-axis rotation axes to exercise the general joint paths.
"""

from . import urdf


def _link(name, mass, com, diag, offdiag=(0.0, 0.0, 0.0)):
    ixy, ixz, iyz = offdiag
    return (f'  <link name="{name}">\n'
            '    <inertial>\n'
            f'      <origin xyz="{com[0]} {com[1]} {com[2]}" rpy="0 0 0"/>\n'
            f'      <mass value="{mass}"/>\n'
            f'      <inertia ixx="{diag[0]}" ixy="{ixy}" ixz="{ixz}" '
            f'iyy="{diag[1]}" iyz="{iyz}" izz="{diag[2]}"/>\n'
            '    </inertial>\n'
            '  </link>\n')


def _joint(name, kind, parent, child, xyz, rpy=(0, 0, 0), axis=(0, 0, 1)):
    return (f'  <joint name="{name}" type="{kind}">\n'
            f'    <parent link="{parent}"/>\n'
            f'    <child link="{child}"/>\n'
            f'    <origin xyz="{xyz[0]} {xyz[1]} {xyz[2]}" rpy="{rpy[0]} {rpy[1]} {rpy[2]}"/>\n'
            f'    <axis xyz="{axis[0]} {axis[1]} {axis[2]}"/>\n'
            '  </joint>\n')


def _chain(name, parent, prefix, specs):
    """specs: list of (kind, xyz, axis, mass, com, diag, offdiag)."""
    out = []
    for k, (kind, xyz, axis, mass, com, diag, offdiag) in enumerate(specs):
        child = f"{prefix}{k}"
        out.append(_link(child, mass, com, diag, offdiag))
        out.append(_joint(f"{prefix}j{k}", kind, parent, child, xyz, axis=axis))
        parent = child
    return "".join(out)


def _robot(name, body):
    return f'<robot name="{name}">\n  <link name="base"/>\n{body}</robot>\n'


def _link1():
    body = _link("arm", 1.2, (0.35, 0.02, -0.01), (0.02, 0.11, 0.12), (0.001, 0.0, 0.0))
    body += _joint("shoulder", "revolute", "base", "arm", (0, 0, 0.1), axis=(0, 0, 1))
    return _robot("link1", body)


def _pendulum2():
    specs = [
        ("revolute", (0, 0, 0.05), (0, 1, 0), 1.0, (0.25, 0, 0), (0.002, 0.022, 0.022), (0, 0, 0)),
        ("revolute", (0.5, 0, 0), (0, 1, 0), 0.8, (0.2, 0, 0), (0.001, 0.012, 0.012), (0, 0, 0)),
    ]
    return _robot("pendulum2", _chain("pendulum2", "base", "p", specs))


def _chain7():
    axes = [(0, 0, 1), (0, 1, 0), (0, 0, 1), (0, 1, 0), (0, 0, 1), (0, 1, 0), (0, 0, 1)]
    specs = []
    for k in range(7):
        m = 4.5 - 0.5 * k
        dz = 0.34 if k == 0 else 0.18 + 0.02 * (k % 3)
        com = (0.01 * (k % 2), -0.02 * (k % 3), 0.5 * dz)
        diag = (0.05 + 0.01 * k, 0.055 + 0.01 * k, 0.035 + 0.004 * k)
        specs.append(("revolute", (0, 0.02 * (k % 2), dz), axes[k], m, com, diag,
                      (0.0005 * (k % 2), 0.0, 0.0003 * (k % 3))))
    return _robot("chain7", _chain("chain7", "base", "a", specs))


def _quad12():
    body = []
    mounts = [(0.3, 0.2, 0), (0.3, -0.2, 0), (-0.3, 0.2, 0), (-0.3, -0.2, 0)]
    for leg, (mx, my, mz) in enumerate(mounts):
        specs = [
            ("revolute", (mx, my, mz), (0, 0, 1), 1.5, (0.05, 0, -0.02), (0.004, 0.005, 0.003), (0, 0, 0)),
            ("revolute", (0.08, 0, -0.05), (0, 1, 0), 1.1, (0.1, 0, -0.01), (0.002, 0.011, 0.011), (0, 0, 0)),
            ("revolute", (0.22, 0, 0), (0, 1, 0), 0.6, (0.11, 0, 0), (0.001, 0.008, 0.008), (0, 0, 0)),
        ]
        body.append(_chain("quad12", "base", f"leg{leg}_", specs))
    return _robot("quad12", "".join(body))


def _humanoid30():
    """Compact research humanoid; joint-space inertia dominated by reflected
    actuator inertia (harmonic drives), keeping M(q) well conditioned."""
    body = []
    spine_axes = [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 0)]
    specs = []
    for k in range(4):
        specs.append(("revolute", (0, 0.01 * (k % 2), 0.11), spine_axes[k],
                      3.0 - 0.2 * k, (0.01, 0, 0.05), (0.12, 0.13, 0.1), (0.0004, 0, 0)))
    body.append(_chain("spine", "base", "sp", specs))

    def arm(prefix, side):
        axes = [(0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
        specs = []
        for k in range(5):
            xyz = (0, side * 0.18, 0.04) if k == 0 else (0, side * 0.01 * (k % 2), -0.12)
            specs.append(("revolute", xyz, axes[k], 1.6 - 0.15 * k,
                          (0, 0.01 * side, -0.06), (0.1, 0.1, 0.09), (0, 0.0002, 0)))
        return _chain("arm", "sp3", prefix, specs)

    def leg(prefix, side):
        axes = [(0, 0, 1), (1, 0, 0), (0, 1, 0), (0, 1, 0), (0, 1, 0), (1, 0, 0), (0, 1, 0)]
        specs = []
        for k in range(7):
            xyz = (0, side * 0.09, -0.04) if k == 0 else (0, 0.01 * (k % 2), -0.13)
            specs.append(("revolute", xyz, axes[k], 2.2 - 0.15 * k,
                          (0.01, 0, -0.06), (0.12, 0.12, 0.1), (0, 0, 0.0003)))
        return _chain("leg", "base", prefix, specs)

    def head():
        specs = [
            ("revolute", (0, 0, 0.1), (0, 0, 1), 0.9, (0, 0, 0.04), (0.08, 0.08, 0.07), (0, 0, 0)),
            ("revolute", (0, 0, 0.07), (0, 1, 0), 0.7, (0, 0, 0.05), (0.07, 0.07, 0.06), (0, 0, 0)),
        ]
        return _chain("head", "sp3", "hd", specs)

    body.append(arm("la", 1))
    body.append(arm("ra", -1))
    body.append(head())
    body.append(leg("ll", 1))
    body.append(leg("rl", -1))
    return _robot("humanoid30", "".join(body))


def _tree7():
    """Branches at several depths; frames number 0..6 in declaration order so
    the depth levels are {0}, {1,5}, {2,4,6}, {3}."""
    L = lambda i: _link(f"n{i}", 1.0 + 0.1 * i, (0.1, 0, 0.05), (0.004, 0.005, 0.003))
    J = lambda i, parent, axis: _joint(f"nj{i}", "revolute", parent, f"n{i}", (0.1, 0.02 * i, 0.1), axis=axis)
    body = (L(0) + J(0, "base", (0, 0, 1))
            + L(1) + J(1, "n0", (0, 1, 0))
            + L(2) + J(2, "n1", (0, 0, 1))
            + L(3) + J(3, "n2", (1, 0, 0))
            + L(4) + J(4, "n1", (0, 1, 0))
            + L(5) + J(5, "n0", (1, 0, 0))
            + L(6) + J(6, "n5", (0, 1, 0)))
    return _robot("tree7", body)


def _mixed5():
    specs = [
        ("revolute", (0, 0, 0.1), (0, 0, 1), 2.0, (0.1, 0.02, 0.03), (0.01, 0.012, 0.008), (0.0008, 0, 0)),
        ("prismatic", (0.15, 0, 0.05), (1, 0, 0), 1.2, (0.05, 0, 0), (0.003, 0.006, 0.006), (0, 0, 0)),
        ("revolute", (0.2, 0, 0), (0, 0.6, 0.8), 1.0, (0.08, 0.01, 0), (0.002, 0.005, 0.005), (0, 0.0002, 0)),
        ("prismatic", (0.1, 0.05, 0), (0, 0, 1), 0.8, (0, 0, 0.06), (0.004, 0.004, 0.001), (0, 0, 0)),
        ("revolute", (0, 0, 0.12), (0.8, 0, -0.6), 0.5, (0.04, 0, 0.02), (0.001, 0.002, 0.002), (0, 0, 0)),
     ]
    return _robot("mixed5", _chain("mixed5", "base", "m", specs))


_BUILDERS = {
    "link1": _link1,
    "pendulum2": _pendulum2,
    "chain7": _chain7,
    "quad12": _quad12,
    "humanoid30": _humanoid30,
    "tree7": _tree7,
    "mixed5": _mixed5,
}

# The complexity ladder exercised by `validate` and the acceptance suite.
BUNDLED = ("link1", "pendulum2", "chain7", "quad12", "humanoid30")


def names():
    return tuple(_BUILDERS)


def urdf_text(name):
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown bundled model {name!r}; available: {', '.join(_BUILDERS)}") from None


def load(name, gravity=urdf.DEFAULT_GRAVITY):
    return urdf.parse_urdf(urdf_text(name), gravity=gravity)
