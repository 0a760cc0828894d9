"""Random connected test networks."""
import numpy as np

from gridcert.netmodel import BranchSpec, GridCase, Mode, NodeKind, NodeSpec


def random_case(rng, n_nodes, r_range=(0.004, 0.01), p_scale=1.0, zero_frac=0.2,
                shunt_frac=0.0, extra_edges=0, droop=True, mode=Mode.MASTER_SLAVE):
    """Random tree (plus ``extra_edges`` chords) rooted at master node ``"1"``.

    Every non-master node is zero-injection with probability ``zero_frac``,
    resistive with probability ``shunt_frac``, otherwise a constant-power node
    with P uniform in [-p_scale, p_scale]. At least one power node is kept.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    labels = [str(i + 1) for i in range(n_nodes)]
    edges = set()
    branches = []
    for i in range(1, n_nodes):
        j = int(rng.integers(0, i))
        edges.add(frozenset((i, j)))
        branches.append(BranchSpec(labels[j], labels[i], float(rng.uniform(*r_range))))
    for _ in range(extra_edges):
        i, j = rng.choice(n_nodes, size=2, replace=False)
        key = frozenset((int(i), int(j)))
        if key in edges:
            continue
        edges.add(key)
        branches.append(BranchSpec(labels[int(i)], labels[int(j)], float(rng.uniform(*r_range))))

    nodes = [NodeSpec(labels[0], NodeKind.MASTER)]
    kinds = []
    for _ in range(1, n_nodes):
        u = rng.uniform()
        if u < zero_frac:
            kinds.append(NodeKind.ZERO_INJECTION)
        elif u < zero_frac + shunt_frac:
            kinds.append(NodeKind.RESISTIVE)
        else:
            kinds.append(NodeKind.POWER)
    if NodeKind.POWER not in kinds:
        kinds[-1] = NodeKind.POWER
    for label, kind in zip(labels[1:], kinds):
        if kind is NodeKind.POWER:
            c = 1.0 / rng.uniform(0.05, 0.09) if droop else 0.0
            nodes.append(NodeSpec(label, kind, float(rng.uniform(-p_scale, p_scale)), c))
        elif kind is NodeKind.RESISTIVE:
            nodes.append(NodeSpec(label, kind, shunt=float(rng.uniform(0.05, 0.5))))
        else:
            nodes.append(NodeSpec(label, kind))
    v_ref = {n.id: 1.0 for n in nodes if n.kind is NodeKind.POWER}
    return GridCase(tuple(nodes), tuple(branches), 1.0, v_ref, mode)
