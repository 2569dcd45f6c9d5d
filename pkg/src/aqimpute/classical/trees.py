"""Decision-tree storage, CART (Gini) growth, second-order boosting trees
and the pre-order CSV serialization shared by the ensembles.

A sample goes to the left child when ``x[feature] <= threshold``. Thresholds
are always feature values present in the training data, so a split sends
the same training rows left under any strictly increasing re-coding of a
feature.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray  # float
    left: np.ndarray       # int child ids, -1 for leaves
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_values) leaf payload

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # pre-order: parents precede children
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


class _Builder:
    """Collects nodes in pre-order."""

    def __init__(self, n_values: int):
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        self.n_values = n_values

    def add(self) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.zeros(self.n_values))
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=float).reshape(-1, self.n_values),
        )


def _best_gini_split(xs, ys_onehot, min_leaf):
    """Best split position of one feature (rows pre-sorted by value).

    Returns ``(score, pos)`` where larger score means lower weighted Gini,
    or ``None`` if no valid split exists.
    """
    n = len(xs)
    cum = np.cumsum(ys_onehot, axis=0)[:-1]
    total = cum[-1] + ys_onehot[-1]
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    right = total - cum
    score = (cum ** 2).sum(axis=1) / nl + (right ** 2).sum(axis=1) / nr
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        valid &= (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    score = np.where(valid, score, -np.inf)
    pos = int(np.argmax(score))
    return float(score[pos]), pos


def grow_cart(X, y, n_classes, rng, max_features=None, min_samples_leaf=1,
              max_depth=None) -> Tree:
    """Grow an unpruned Gini classification tree.

    At each node ``max_features`` candidate features are drawn without
    replacement; if none of them admits a split the remaining features are
    tried in the same random order. Leaves store class counts.
    """
    n, d = X.shape
    mtry = d if max_features is None else max(1, min(d, int(max_features)))
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    b = _Builder(n_classes)
    stack = [(np.arange(n), -1, False, 0)]
    while stack:
        idx, parent, is_right, depth = stack.pop()
        node = b.add()
        if parent >= 0:
            (b.right if is_right else b.left)[parent] = node
        counts = Y[idx].sum(axis=0)
        b.value[node] = counts
        if (np.count_nonzero(counts) <= 1 or len(idx) < 2 * min_samples_leaf
                or (max_depth is not None and depth >= max_depth)):
            continue
        order_f = rng.permutation(d)
        best = None
        for j, f in enumerate(order_f):
            if j >= mtry and best is not None:
                break
            xs = X[idx, f]
            order = np.argsort(xs, kind="stable")
            res = _best_gini_split(xs[order], Y[idx[order]], min_samples_leaf)
            if res is not None and (best is None or res[0] > best[0]):
                best = (res[0], f, xs[order][res[1]])
        if best is None:
            continue
        _, f, thr = best
        b.feature[node] = int(f)
        b.threshold[node] = float(thr)
        go_left = X[idx, f] <= thr
        stack.append((idx[~go_left], node, True, depth + 1))
        stack.append((idx[go_left], node, False, depth + 1))
    return b.build()


def bin_edges(X: np.ndarray, max_bins: int = 256) -> list[np.ndarray]:
    """Per-feature cut values taken from the data (at most ``max_bins - 1``)."""
    edges = []
    for j in range(X.shape[1]):
        distinct = np.unique(X[:, j])
        if len(distinct) <= max_bins:
            edges.append(distinct[:-1])
        else:
            pos = np.unique((np.arange(1, max_bins) * len(distinct)) // max_bins - 1)
            edges.append(distinct[pos])
    return edges


def apply_bins(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    """Bin index per value: ``x <= edges[b]`` iff ``bin <= b``."""
    B = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        B[:, j] = np.searchsorted(e, X[:, j], side="left")
    return B


def grow_boosting_tree(B, edges, g, h, max_depth=6, reg_lambda=1.0, min_child_weight=1.0):
    """Second-order regression tree on binned features, grown level by level.

    Split gain is ``GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)`` (must be positive);
    leaf weight is ``-G/(H+l)``. Returns the tree and each row's leaf weight.
    """
    n, d = B.shape
    nb = max(len(e) for e in edges) + 1 if edges else 1
    n_cuts = np.array([len(e) for e in edges])
    cut_ok = np.arange(nb)[None, :] < n_cuts[:, None]  # (d, nb)
    feat_off = (np.arange(d) * nb)[None, :]
    # temporary level-order nodes; renumbered to pre-order at the end
    feature, thresh, left, right, weight = [], [], [], [], []

    def new_node(G, H):
        feature.append(LEAF)
        thresh.append(0.0)
        left.append(-1)
        right.append(-1)
        weight.append(-G / (H + reg_lambda))
        return len(feature) - 1

    node_of = np.zeros(n, dtype=np.int64)
    root = new_node(g.sum(), h.sum())
    frontier = [root]
    rows = np.arange(n)
    for _ in range(max_depth):
        if not frontier or rows.size == 0:
            break
        slot = {nd: i for i, nd in enumerate(frontier)}
        slot_of = np.array([slot.get(nd, -1) for nd in range(len(feature))])[node_of[rows]]
        keep = slot_of >= 0
        rows, slot_of = rows[keep], slot_of[keep]
        m = len(frontier)
        key = (slot_of[:, None] * (d * nb) + feat_off + B[rows]).ravel()
        size = m * d * nb
        Gh = np.bincount(key, weights=np.repeat(g[rows], d), minlength=size).reshape(m, d, nb)
        Hh = np.bincount(key, weights=np.repeat(h[rows], d), minlength=size).reshape(m, d, nb)
        GL = np.cumsum(Gh, axis=2)
        HL = np.cumsum(Hh, axis=2)
        G = GL[:, :1, -1:]
        H = HL[:, :1, -1:]
        GR = G - GL
        HR = H - HL
        gain = GL ** 2 / (HL + reg_lambda) + GR ** 2 / (HR + reg_lambda) - G ** 2 / (H + reg_lambda)
        ok = cut_ok[None] & (HL >= min_child_weight) & (HR >= min_child_weight)
        gain = np.where(ok, gain, -np.inf)
        flat = gain.reshape(m, -1)
        best = np.argmax(flat, axis=1)
        next_frontier = []
        split_f = np.full(m, -1)
        split_b = np.zeros(m, dtype=np.int64)
        for i, nd in enumerate(frontier):
            gbest = flat[i, best[i]]
            if not gbest > 1e-12:
                continue
            f, bcut = divmod(int(best[i]), nb)
            feature[nd] = f
            thresh[nd] = float(edges[f][bcut])
            gl, hl = GL[i, f, bcut], HL[i, f, bcut]
            left[nd] = new_node(gl, hl)
            right[nd] = new_node(G[i, 0, 0] - gl, H[i, 0, 0] - hl)
            next_frontier += [left[nd], right[nd]]
            split_f[i], split_b[i] = f, bcut
        moving = split_f[slot_of] >= 0
        r = rows[moving]
        s = slot_of[moving]
        go_left = B[r, split_f[s]] <= split_b[s]
        parent = np.array(frontier)[s]
        node_of[r] = np.where(go_left, np.array(left)[parent], np.array(right)[parent])
        rows = r
        frontier = next_frontier

    # renumber to pre-order
    order = []
    stack = [root]
    while stack:
        nd = stack.pop()
        order.append(nd)
        if feature[nd] != LEAF:
            stack += [right[nd], left[nd]]
    new_id = {old: i for i, old in enumerate(order)}
    tree = Tree(
        np.array([feature[o] for o in order], dtype=np.int64),
        np.array([thresh[o] for o in order]),
        np.array([new_id[left[o]] if left[o] >= 0 else -1 for o in order], dtype=np.int64),
        np.array([new_id[right[o]] if right[o] >= 0 else -1 for o in order], dtype=np.int64),
        np.array([weight[o] for o in order]).reshape(-1, 1),
    )
    return tree, np.array(weight)[node_of]


TREE_MAGIC = "# aqimpute-trees v1"


def save_trees(path, trees: list[Tree], meta: dict) -> None:
    """Pre-order node list, one row per node; leaf payload as space-separated floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(TREE_MAGIC + "\n")
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tree", "node", "feature", "threshold", "left", "right", "value"])
        for t_id, t in enumerate(trees):
            for i in range(t.n_nodes):
                leaf = t.feature[i] == LEAF
                w.writerow([
                    t_id, i, int(t.feature[i]),
                    "" if leaf else repr(float(t.threshold[i])),
                    int(t.left[i]), int(t.right[i]),
                    " ".join(repr(float(v)) for v in t.value[i]),
                ])


def load_trees(path) -> tuple[list[Tree], dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        if fh.readline().rstrip("\n") != TREE_MAGIC:
            raise ValueError(f"{path}: not a tree file")
        meta = json.loads(fh.readline()[2:])
        reader = csv.DictReader(fh)
        grouped: dict[int, list] = {}
        for row in reader:
            grouped.setdefault(int(row["tree"]), []).append(row)
    trees = []
    for t_id in sorted(grouped):
        rows = grouped[t_id]
        trees.append(Tree(
            np.array([int(r["feature"]) for r in rows], dtype=np.int64),
            np.array([float(r["threshold"]) if r["threshold"] else 0.0 for r in rows]),
            np.array([int(r["left"]) for r in rows], dtype=np.int64),
            np.array([int(r["right"]) for r in rows], dtype=np.int64),
            np.array([[float(v) for v in r["value"].split()] for r in rows]),
        ))
    return trees, meta
