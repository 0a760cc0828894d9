"""Case files, nodal admittance assembly and Kron reductions.

Case format (UTF-8 CSV)::

    #master 1 1.0
    #mode master_slave
    #vref 1.0            uniform droop reference
    #vref 7 0.98         per-node droop reference
    #vref master         use the master-slave solution as reference
    #shunt 14 0.3        constant-conductance load (pu)
    from,to,r,P,inv_C
    1,2,0.0053,-0.70,0.05

``P`` and ``inv_C`` of a row belong to the row's ``to`` node. Lines starting
with ``# `` (hash, space) are comments.
"""
import csv
import io
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from gridcert.numerics import LUFactor, SingularMatrixError

HEADER = ["from", "to", "r", "P", "inv_C"]


class CaseFormatError(ValueError):
    """Malformed or inconsistent case file."""


class NodeKind(str, Enum):
    MASTER = "master"
    POWER = "power"
    ZERO_INJECTION = "zero_injection"
    RESISTIVE = "resistive"


class Mode(str, Enum):
    MASTER_SLAVE = "master_slave"
    ISLAND = "island"

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise CaseFormatError(f"unknown mode {text!r}") from None


@dataclass(frozen=True)
class NodeSpec:
    id: str
    kind: NodeKind
    power: float = 0.0
    droop: float = 0.0
    shunt: float = 0.0

    def __post_init__(self):
        if self.droop < 0 or self.shunt < 0:
            raise CaseFormatError(f"node {self.id}: droop and shunt must be >= 0")
        if self.kind is NodeKind.ZERO_INJECTION and (self.power or self.droop or self.shunt):
            raise CaseFormatError(f"node {self.id}: zero-injection node carries data")


@dataclass(frozen=True)
class BranchSpec:
    src: str
    dst: str
    resistance: float

    def __post_init__(self):
        if not self.resistance > 0:
            raise CaseFormatError(f"branch {self.src}-{self.dst}: resistance must be > 0")
        if self.src == self.dst:
            raise CaseFormatError(f"branch {self.src}-{self.dst}: self loop")


@dataclass(frozen=True)
class GridCase:
    """Per-unit network description."""

    nodes: tuple
    branches: tuple
    v_master: float = 1.0
    v_ref: dict = field(default_factory=dict)
    mode: Mode = Mode.MASTER_SLAVE
    vref_from_master: bool = False

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise CaseFormatError("duplicate node ids")
        if not self.branches:
            raise CaseFormatError("case has no branches")
        known = set(ids)
        seen = set()
        for b in self.branches:
            if b.src not in known or b.dst not in known:
                raise CaseFormatError(f"branch {b.src}-{b.dst} references unknown node")
            key = frozenset((b.src, b.dst))
            if key in seen:
                raise CaseFormatError(f"duplicate branch {b.src}-{b.dst}")
            seen.add(key)
        masters = [n for n in self.nodes if n.kind is NodeKind.MASTER]
        if len(masters) > 1:
            raise CaseFormatError("more than one master node")
        if self.mode is Mode.MASTER_SLAVE and not masters:
            raise CaseFormatError("master-slave mode needs a #master directive")
        if self.vref_from_master and not masters:
            raise CaseFormatError("'#vref master' needs a #master directive")
        if not _connected(ids, self.branches):
            raise CaseFormatError("branch graph is disconnected")

    @property
    def master(self):
        for n in self.nodes:
            if n.kind is NodeKind.MASTER:
                return n
        return None

    def node(self, node_id):
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def with_mode(self, mode):
        return _replace(self, mode=Mode.parse(mode) if not isinstance(mode, Mode) else mode)

    def scaled(self, factor):
        """Copy with every injected power multiplied by ``factor``."""
        nodes = tuple(
            NodeSpec(n.id, n.kind, n.power * factor, n.droop, n.shunt) for n in self.nodes
        )
        return _replace(self, nodes=nodes)


def _replace(case, **changes):
    kw = dict(nodes=case.nodes, branches=case.branches, v_master=case.v_master,
              v_ref=case.v_ref, mode=case.mode, vref_from_master=case.vref_from_master)
    kw.update(changes)
    return GridCase(**kw)


def _connected(ids, branches):
    adj = {i: [] for i in ids}
    for b in branches:
        adj[b.src].append(b.dst)
        adj[b.dst].append(b.src)
    start = ids[0]
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(ids)


def _float(text, what, lineno):
    try:
        return float(text)
    except ValueError:
        raise CaseFormatError(f"line {lineno}: bad {what} {text!r}") from None


def parse_case(text):
    """Parse case-file text into a validated :class:`GridCase`."""
    master = None
    v_master = 1.0
    mode = Mode.MASTER_SLAVE
    vref_uniform = None
    vref_nodes = {}
    vref_from_master = False
    shunts = {}
    data_lines = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line == "#" or line[1].isspace():
                continue
            parts = line[1:].split()
            key, args = parts[0].lower(), parts[1:]
            if key == "master":
                if len(args) not in (1, 2):
                    raise CaseFormatError(f"line {lineno}: usage '#master <node> [v_v]'")
                master = args[0]
                if len(args) == 2:
                    v_master = _float(args[1], "master voltage", lineno)
            elif key == "vref":
                if len(args) == 1 and args[0].lower() == "master":
                    vref_from_master = True
                elif len(args) == 1:
                    vref_uniform = _float(args[0], "vref", lineno)
                elif len(args) == 2:
                    vref_nodes[args[0]] = _float(args[1], "vref", lineno)
                else:
                    raise CaseFormatError(f"line {lineno}: usage '#vref <value>|<node> <value>|master'")
            elif key == "mode":
                if len(args) != 1:
                    raise CaseFormatError(f"line {lineno}: usage '#mode <mode>'")
                mode = Mode.parse(args[0])
            elif key == "shunt":
                if len(args) != 2:
                    raise CaseFormatError(f"line {lineno}: usage '#shunt <node> <g>'")
                shunts[args[0]] = _float(args[1], "shunt", lineno)
            else:
                raise CaseFormatError(f"line {lineno}: unknown directive #{key}")
            continue
        data_lines.append((lineno, line))

    if not data_lines:
        raise CaseFormatError("case has no branches")
    header = [h.strip() for h in next(csv.reader([data_lines[0][1]]))]
    if header != HEADER:
        raise CaseFormatError(f"expected header {','.join(HEADER)}, got {data_lines[0][1]!r}")

    order = []
    attach = {}
    branches = []
    for lineno, line in data_lines[1:]:
        row = [c.strip() for c in next(csv.reader([line]))]
        if len(row) != 5:
            raise CaseFormatError(f"line {lineno}: expected 5 fields, got {len(row)}")
        src, dst = row[0], row[1]
        if not src or not dst:
            raise CaseFormatError(f"line {lineno}: empty node label")
        r = _float(row[2], "resistance", lineno)
        p = _float(row[3], "P", lineno)
        inv_c = _float(row[4], "inv_C", lineno)
        if inv_c < 0:
            raise CaseFormatError(f"line {lineno}: inv_C must be >= 0")
        try:
            branches.append(BranchSpec(src, dst, r))
        except CaseFormatError as exc:
            raise CaseFormatError(f"line {lineno}: {exc}") from None
        for n in (src, dst):
            if n not in attach:
                attach[n] = (0.0, 0.0)
                order.append(n)
        if p != 0.0 or inv_c != 0.0:
            if attach[dst] != (0.0, 0.0) and attach[dst] != (p, inv_c):
                raise CaseFormatError(f"line {lineno}: conflicting data for node {dst}")
            attach[dst] = (p, inv_c)

    if master is not None and master not in attach:
        raise CaseFormatError(f"master node {master!r} not in branch list")
    for n in list(shunts) + list(vref_nodes):
        if n not in attach:
            raise CaseFormatError(f"directive references unknown node {n!r}")

    nodes = []
    for n in order:
        p, inv_c = attach[n]
        droop = 1.0 / inv_c if inv_c > 0 else 0.0
        g = shunts.get(n, 0.0)
        if n == master:
            if g:
                raise CaseFormatError(f"shunt on master node {n}")
            kind = NodeKind.MASTER
        elif p != 0.0 or droop > 0.0:
            if g:
                raise CaseFormatError(f"shunt on power node {n}")
            kind = NodeKind.POWER
        elif g:
            kind = NodeKind.RESISTIVE
        else:
            kind = NodeKind.ZERO_INJECTION
        if kind is NodeKind.MASTER:
            p, droop = 0.0, 0.0
        nodes.append(NodeSpec(n, kind, p, droop, g))

    v_ref = {}
    for node in nodes:
        if node.kind is NodeKind.POWER:
            v_ref[node.id] = vref_nodes.get(node.id, 1.0 if vref_uniform is None else vref_uniform)
    return GridCase(tuple(nodes), tuple(branches), v_master, v_ref, mode, vref_from_master)


def load_case(path):
    return parse_case(Path(path).read_text(encoding="utf-8"))


def format_case(case):
    """Inverse of :func:`parse_case` (up to directive order)."""
    lines = []
    if case.master is not None:
        lines.append(f"#master {case.master.id} {case.v_master!r}")
    lines.append(f"#mode {case.mode.value}")
    if case.vref_from_master:
        lines.append("#vref master")
    for k, val in case.v_ref.items():
        lines.append(f"#vref {k} {val!r}")
    for n in case.nodes:
        if n.shunt:
            lines.append(f"#shunt {n.id} {n.shunt!r}")
    lines.append(",".join(HEADER))
    written = set()
    for b in case.branches:
        n = case.node(b.dst)
        p, inv_c = 0.0, 0.0
        if b.dst not in written:
            p, inv_c = n.power, (1.0 / n.droop if n.droop else 0.0)
            written.add(b.dst)
        lines.append(f"{b.src},{b.dst},{b.resistance!r},{p!r},{inv_c!r}")
    return "\n".join(lines) + "\n"


# -- admittance ---------------------------------------------------------------

@dataclass(frozen=True)
class AdmittanceBlocks:
    """Branch admittance matrix partitioned by terminal class.

    Class order is (v, p, r); ``r`` holds resistive and zero-injection nodes.
    """

    y: np.ndarray
    v_ids: tuple
    p_ids: tuple
    r_ids: tuple

    def _idx(self, cls):
        offsets = {"v": 0, "p": len(self.v_ids), "r": len(self.v_ids) + len(self.p_ids)}
        sizes = {"v": len(self.v_ids), "p": len(self.p_ids), "r": len(self.r_ids)}
        return slice(offsets[cls], offsets[cls] + sizes[cls])

    def block(self, row_cls, col_cls):
        return self.y[self._idx(row_cls), self._idx(col_cls)]

    def __getattr__(self, name):
        # y_vv, y_vp, ..., y_rr
        if len(name) == 4 and name[:2] == "y_" and set(name[2:]) <= set("vpr"):
            return self.block(name[2], name[3])
        raise AttributeError(name)

    @property
    def order(self):
        return self.v_ids + self.p_ids + self.r_ids


def branch_matrix(labels, branches):
    """Nodal conductance matrix over ``labels`` (rows sum to zero)."""
    index = {n: i for i, n in enumerate(labels)}
    y = np.zeros((len(labels), len(labels)))
    for b in branches:
        i, j = index[b.src], index[b.dst]
        g = 1.0 / b.resistance
        y[i, i] += g
        y[j, j] += g
        y[i, j] -= g
        y[j, i] -= g
    return y


def assemble_admittance(case):
    v_ids = tuple(n.id for n in case.nodes if n.kind is NodeKind.MASTER)
    p_ids = tuple(n.id for n in case.nodes if n.kind is NodeKind.POWER)
    r_ids = tuple(n.id for n in case.nodes
                  if n.kind in (NodeKind.ZERO_INJECTION, NodeKind.RESISTIVE))
    labels = v_ids + p_ids + r_ids
    return AdmittanceBlocks(branch_matrix(labels, case.branches), v_ids, p_ids, r_ids)


def kron_eliminate(y, keep, drop):
    """Schur complement of ``y[drop, drop]`` in ``y``; returns ``Y[keep, keep]``."""
    keep = list(keep)
    drop = list(drop)
    y_kk = y[np.ix_(keep, keep)]
    if not drop:
        return y_kk.copy()
    try:
        lu = LUFactor.factor(y[np.ix_(drop, drop)])
    except SingularMatrixError:
        raise SingularMatrixError("eliminated block is singular (isolated subnetwork?)") from None
    y_kd = y[np.ix_(keep, drop)]
    y_dk = y[np.ix_(drop, keep)]
    sol = np.column_stack([lu.solve(y_dk[:, j]) for j in range(len(keep))]) if keep else y_dk
    return y_kk - y_kd @ sol


@dataclass(frozen=True)
class ReducedNetwork:
    """Solver-ready network after eliminating class-r nodes (and the master in island mode)."""

    y_pp: np.ndarray
    y_pv: np.ndarray
    y_vv: np.ndarray
    y_s: np.ndarray
    index_map: tuple
    master_ids: tuple
    mode: Mode

    @property
    def size(self):
        return len(self.index_map)

    def row(self, node_id):
        return self.index_map.index(node_id)


def kron_reduce_resistive(blocks, g_rr=None):
    """Eliminate class-r nodes, terminated by the diagonal conductances ``g_rr``."""
    nv, npw, nr = len(blocks.v_ids), len(blocks.p_ids), len(blocks.r_ids)
    g = np.zeros(nr) if g_rr is None else np.asarray(g_rr, dtype=np.float64)
    if g.ndim == 2:
        g = np.diag(g)
    y = blocks.y.copy()
    r_idx = np.arange(nv + npw, nv + npw + nr)
    y[r_idx, r_idx] += g
    red = kron_eliminate(y, range(nv + npw), r_idx)
    y_vv = red[:nv, :nv]
    y_pv, y_pp = red[nv:, :nv], red[nv:, nv:]
    return ReducedNetwork(
        y_pp=y_pp, y_pv=y_pv, y_vv=y_vv, y_s=np.zeros((0, 0)),
        index_map=blocks.p_ids, master_ids=blocks.v_ids, mode=Mode.MASTER_SLAVE,
    )


def kron_reduce_master(net, y_vv=None):
    """Open the master switch: ``Y_s = Y_pp - Y_pv Y_vv^{-1} Y_vp``."""
    y_vv = net.y_vv if y_vv is None else np.atleast_2d(np.asarray(y_vv, dtype=np.float64))
    if y_vv.size == 0:
        y_s = net.y_pp.copy()
    else:
        lu = LUFactor.factor(y_vv)
        sol = np.column_stack([lu.solve(net.y_pv.T[:, j]) for j in range(net.size)])
        y_s = net.y_pp - net.y_pv @ sol
    return ReducedNetwork(
        y_pp=net.y_pp, y_pv=net.y_pv, y_vv=y_vv, y_s=y_s,
        index_map=net.index_map, master_ids=net.master_ids, mode=Mode.ISLAND,
    )


def reduce_case(case, mode=None):
    """Full reduction pipeline for ``case`` in ``mode`` (defaults to the case's mode)."""
    mode = case.mode if mode is None else Mode.parse(mode) if not isinstance(mode, Mode) else mode
    blocks = assemble_admittance(case)
    g_rr = np.array([case.node(n).shunt for n in blocks.r_ids])
    net = kron_reduce_resistive(blocks, g_rr)
    if net.size == 0:
        raise CaseFormatError("case has no constant-power nodes")
    if mode is Mode.ISLAND:
        net = kron_reduce_master(net)
    return net
