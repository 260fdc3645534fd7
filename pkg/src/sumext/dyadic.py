"""Dyadic cubes, the Calderon-Zygmund decomposition, keystone cubes, chains and kappa.

Cubes live in a frame: a box (lo, side) playing the role of the unit cube.  A cube of
level k <= 0 and index j occupies lo + side * prod (j_i 2^k, (j_i + 1) 2^k].
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .jets import label_from_json, label_to_json
from .measures import AtomicMeasure, Box, unit_box

log = logging.getLogger(__name__)

CHAIN_C = 2.0 ** (-1.0 / 128)  # decay rate used for the recorded chain certificate
CHAIN_C_MAX = 64.0


class DecompositionError(RuntimeError):
    def __init__(self, msg, cube=None):
        super().__init__(msg if cube is None else f"{msg}: {cube}")
        self.cube = cube


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple

    @property
    def rel_side(self) -> float:
        return 2.0**self.level

    def box(self, frame: Box) -> Box:
        side = float(frame.sides[0])
        s = side * self.rel_side
        lo = frame.lo_arr + s * np.asarray(self.index, float)
        return Box(lo, lo + s)

    def children(self):
        n = len(self.index)
        for off in itertools.product((0, 1), repeat=n):
            yield DyadicCube(self.level - 1, tuple(2 * j + o for j, o in zip(self.index, off)))

    def parent(self):
        if self.level >= 0:
            return None
        return DyadicCube(self.level + 1, tuple(j // 2 for j in self.index))

    def to_json(self):
        return {"level": self.level, "index": list(self.index)}


def root_cube(n: int) -> DyadicCube:
    return DyadicCube(0, (0,) * n)


@dataclass
class CZTree:
    frame: Box
    cubes: list  # DyadicCube, sorted by lower corner
    labels: list  # witness label per cube (None for terminal cubes)
    terminal: list  # bool per cube
    boxes: list = field(default_factory=list)
    neighbors: list = field(default_factory=list)
    keystones: list = field(default_factory=list)
    chains: list = field(default_factory=list)
    kappa: list = field(default_factory=list)
    chain_certificate: tuple = (1.0, CHAIN_C)
    label_of_root: object = None

    @property
    def n(self) -> int:
        return self.frame.n

    def side(self, i: int) -> float:
        return float(self.boxes[i].sides[0])

    def center(self, i: int) -> np.ndarray:
        return self.boxes[i].center

    def __len__(self):
        return len(self.cubes)

    def locate(self, pts) -> np.ndarray:
        """Index of the cube containing each point (half-open), -1 if none."""
        pts = np.reshape(np.asarray(pts, float), (-1, self.n))
        out = np.full(pts.shape[0], -1)
        for i, b in enumerate(self.boxes):
            out[b.contains(pts)] = i
        return out

    def to_json(self):
        return {
            "frame": self.frame.to_json(),
            "cubes": [c.to_json() for c in self.cubes],
            "labels": [None if a is None else label_to_json(a) for a in self.labels],
            "terminal": list(map(bool, self.terminal)),
            "keystone": [i in set(self.keystones) for i in range(len(self.cubes))],
            "chains": [list(map(int, c)) for c in self.chains],
            "kappa": list(map(int, self.kappa)),
            "chain_certificate": {"C": self.chain_certificate[0], "c": self.chain_certificate[1]},
        }

    @classmethod
    def from_json(cls, data) -> "CZTree":
        frame = Box(data["frame"]["lo"], data["frame"]["hi"])
        cubes = [DyadicCube(int(c["level"]), tuple(c["index"])) for c in data["cubes"]]
        labels = [None if a is None else label_from_json(a) for a in data["labels"]]
        return build_tree(frame, cubes, labels, data.get("terminal"))


def _sort_key(box: Box):
    return tuple(box.lo) + (box.sides[0],)


def build_tree(frame: Box, cubes, labels=None, terminal=None) -> CZTree:
    """Assemble a tree from a list of cubes: neighbors, keystones, chains and kappa."""
    cubes = list(cubes)
    labels = list(labels) if labels is not None else [None] * len(cubes)
    terminal = list(terminal) if terminal is not None else [False] * len(cubes)
    boxes = [c.box(frame) for c in cubes]
    order = sorted(range(len(cubes)), key=lambda i: _sort_key(boxes[i]))
    cubes = [cubes[i] for i in order]
    labels = [labels[i] for i in order]
    terminal = [terminal[i] for i in order]
    boxes = [boxes[i] for i in order]
    tree = CZTree(frame, cubes, labels, terminal, boxes)
    tree.neighbors = _neighbors(boxes)
    tree.keystones = keystone_cubes(tree)
    geom = _geometry(tree)
    tree.chains = [chain(tree, i, geom) for i in range(len(cubes))]
    tree.kappa = [c[-1] for c in tree.chains]
    tree.chain_certificate = (chain_constant(tree, CHAIN_C), CHAIN_C)
    return tree


def _neighbors(boxes):
    lo = np.array([b.lo for b in boxes])
    hi = np.array([b.hi for b in boxes])
    out = []
    for i in range(len(boxes)):
        meet = np.all(lo <= hi[i] + 1e-15, axis=1) & np.all(lo[i] <= hi + 1e-15, axis=1)
        meet[i] = False
        out.append(sorted(np.flatnonzero(meet).tolist()))
    return out


# ---------------------------------------------------------------------------
# decomposition


def _terminal(cube_box: Box, measure: AtomicMeasure) -> bool:
    """3Q meets supp(mu) in a single location carrying an infinite weight."""
    sub = measure.restrict(cube_box.dilate(3.0))
    return len(sub) == 1 and bool(sub.infinite[0])


def cz_decompose(measure: AtomicMeasure, A, cfg: Config, frame: Box | None = None, ok_fn=None) -> CZTree:
    """Maximal OK dyadic subcubes of the frame (the root is assumed not OK).

    A cube that is not OK but whose 3Q contains exactly one atom, of infinite weight,
    becomes a terminal leaf: no basis test can succeed there, and the operator handles
    it by exact local interpolation.
    """
    from .oracle import ok_test

    frame = frame if frame is not None else unit_box(measure.n)
    ok_fn = ok_fn or (lambda box, lab: ok_test(box, lab, measure, cfg))
    leaves, labels, terminal = [], [], []
    stack = list(root_cube(frame.n).children())
    while stack:
        q = stack.pop()
        box = q.box(frame)
        ok, wit = ok_fn(box, A)
        if ok:
            leaves.append(q)
            labels.append(wit)
            terminal.append(False)
        elif _terminal(box, measure):
            leaves.append(q)
            labels.append(None)
            terminal.append(True)
        elif -q.level >= cfg.max_depth:
            raise DecompositionError("decomposition did not terminate", q)
        else:
            stack.extend(q.children())
    tree = build_tree(frame, leaves, labels, terminal)
    tree.label_of_root = A
    return tree


# ---------------------------------------------------------------------------
# keystones, chains, kappa


def keystone_cubes(tree: CZTree) -> list:
    """Cubes Q with delta_Q <= delta_Q' for every CZ cube Q' meeting 100Q."""
    out = []
    sides = np.array([tree.side(i) for i in range(len(tree.cubes))])
    lo = np.array([b.lo for b in tree.boxes])
    hi = np.array([b.hi for b in tree.boxes])
    for i, b in enumerate(tree.boxes):
        big = b.dilate(100.0)
        meet = np.all(lo <= big.hi_arr, axis=1) & np.all(big.lo_arr <= hi, axis=1)
        if np.all(sides[meet] >= sides[i]):
            out.append(i)
    return out


def _geometry(tree: CZTree):
    lo = np.array([b.lo for b in tree.boxes])
    hi = np.array([b.hi for b in tree.boxes])
    return lo, hi, hi[:, 0] - lo[:, 0], 0.5 * (lo + hi)


def _segment_cubes(tree: CZTree, a: np.ndarray, b: np.ndarray, geom=None) -> list:
    """Cubes whose closure meets the segment a -> b, ordered along the segment."""
    lo, hi, _, _ = geom or _geometry(tree)
    d = b - a
    t0 = np.zeros(lo.shape[0])
    t1 = np.ones(lo.shape[0])
    for k in range(tree.n):
        if abs(d[k]) < 1e-300:
            out = (a[k] < lo[:, k]) | (a[k] > hi[:, k])
            t0[out], t1[out] = 1.0, 0.0
            continue
        u = (lo[:, k] - a[k]) / d[k]
        v = (hi[:, k] - a[k]) / d[k]
        t0 = np.maximum(t0, np.minimum(u, v))
        t1 = np.minimum(t1, np.maximum(u, v))
    hit = np.flatnonzero(t0 <= t1 + 1e-15)
    order = sorted(hit.tolist(), key=lambda i: (t0[i], t1[i], i))
    return order


def chain(tree: CZTree, i: int, geom=None) -> list:
    """Junior-partner walk from cube i to a keystone cube through neighboring cubes."""
    keys = set(tree.keystones)
    geom = geom or _geometry(tree)
    lo, hi, sides, centers = geom
    seq = [i]
    cur = i
    while cur not in keys:
        half_side = 50.0 * sides[cur]
        c0 = centers[cur]
        meet = np.all(lo <= c0 + half_side, axis=1) & np.all(c0 - half_side <= hi, axis=1)
        cands = np.flatnonzero(meet & (sides <= 0.5 * sides[cur] * (1 + 1e-12)))
        if cands.size == 0:
            raise DecompositionError("non-keystone cube without a junior partner", tree.cubes[cur])
        j = int(min(cands, key=lambda q: (float(np.linalg.norm(centers[q] - c0)), tuple(lo[q]), sides[q])))
        walk = _segment_cubes(tree, c0, centers[j], geom)
        path = []
        for q in walk:
            if q == cur or (path and q == path[-1]):
                continue
            path.append(q)
            if q == j:
                break
        if not path or path[-1] != j:
            path.append(j)
        seq.extend(path)
        cur = j
    return seq


def chain_constant(tree: CZTree, c: float = CHAIN_C) -> float:
    """Smallest C with delta_{Q^k} <= C c^{k-l} delta_{Q^l} over all emitted chains."""
    best = 1.0
    for ch in tree.chains:
        s = np.array([tree.side(q) for q in ch])
        L = len(s)
        for l in range(L):
            k = np.arange(l, L)
            ratio = s[l:] / (c ** (k - l) * s[l])
            best = max(best, float(ratio.max()))
    return best


def kappa(tree: CZTree, i: int) -> int:
    return tree.kappa[i]


# ---------------------------------------------------------------------------
# audits


def overlap_multiplicity(boxes) -> int:
    from .norms import overlap_audit

    return overlap_audit(boxes)


def geometry_audit(tree: CZTree, samples: int = 1024, measure: AtomicMeasure | None = None,
                   cfg: Config | None = None) -> dict:
    """Neighbor ratios, 1.3Q multiplicity, boundary sizes, partition, chain decay, K_p emptiness."""
    n = tree.n
    violations = []
    for i, nb in enumerate(tree.neighbors):
        for j in nb:
            r = tree.side(j) / tree.side(i)
            if not (0.5 - 1e-12 <= r <= 2 + 1e-12):
                violations.append({"kind": "neighbor_ratio", "pair": [i, j], "ratio": r})
    mult = overlap_multiplicity([b.dilate(1.3) for b in tree.boxes])
    if mult > 3**n:
        violations.append({"kind": "multiplicity", "value": mult})
    fside = float(tree.frame.sides[0])
    for i, b in enumerate(tree.boxes):
        touches = np.any(np.isclose(b.lo_arr, tree.frame.lo_arr)) or np.any(np.isclose(b.hi_arr, tree.frame.hi_arr))
        if touches and tree.side(i) < fside / 20 * (1 - 1e-12):
            violations.append({"kind": "boundary_size", "cube": i})
    g = samples if n == 1 else max(8, int(round(samples**0.5)))
    ax = tree.frame.lo_arr[0] + fside * (np.arange(g) + 0.5) / g
    if n == 1:
        pts = ax.reshape(-1, 1)
    else:
        ay = tree.frame.lo_arr[1] + fside * (np.arange(g) + 0.5) / g
        X, Y = np.meshgrid(ax, ay, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
    count = np.zeros(pts.shape[0], int)
    for b in tree.boxes:
        count += b.contains(pts)
    uncovered = int(np.sum(count == 0))
    doubled = int(np.sum(count > 1))
    if uncovered or doubled:
        violations.append({"kind": "partition", "uncovered": uncovered, "overlapping": doubled})
    C, c = tree.chain_certificate
    if C > CHAIN_C_MAX:
        violations.append({"kind": "chain_decay", "C": C, "c": c})
    for ch in tree.chains:
        for a, b in zip(ch, ch[1:]):
            if b not in tree.neighbors[a]:
                violations.append({"kind": "chain_link", "pair": [a, b]})
    ok_checks = None
    if measure is not None and cfg is not None:
        from .oracle import ok_test

        ok_checks = 0
        A = tree.label_of_root
        for i, q in enumerate(tree.cubes):
            if tree.terminal[i]:
                continue
            ok, _ = ok_test(tree.boxes[i], A, measure, cfg)
            par = q.parent()
            pok = ok_test(par.box(tree.frame), A, measure, cfg)[0] if par is not None and par.level < 0 else False
            ok_checks += 1
            if not ok or pok:
                violations.append({"kind": "ok_maximality", "cube": i, "ok": ok, "parent_ok": pok})
    return {
        "violations": violations,
        "multiplicity_1_3": mult,
        "kp_uncovered_samples": uncovered,
        "chain_C": C,
        "chain_c": c,
        "n_cubes": len(tree.cubes),
        "n_keystones": len(tree.keystones),
        "max_depth": int(max(-q.level for q in tree.cubes)) if tree.cubes else 0,
        "ok_rechecked": ok_checks,
    }
