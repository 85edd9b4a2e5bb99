"""Exact per-tree Shapley attributions with node-cover conditional expectations.

``tree_shap`` runs the polynomial-time path algorithm (extend/unwind of a
weighted unique path, iteratively with an explicit stack so the hot kernel
jits cleanly). ``brute_force_shap`` is the independent oracle: it scores
every feature subset by cover-weighted descent and applies the classic
weighted-subset sum. Both operate on class-probability outputs so local
accuracy holds against ``predict_proba``.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._accel import maybe_njit, select
from .errors import DimensionMismatch, EmptyDataset, MissingCover, TooManyFeatures
from .forest import CLASSES, N_CLASSES, RandomForest, predict_proba

MAX_BRUTE_FORCE_FEATURES = 15


@dataclass
class ShapExplanation:
    """Per-class feature attributions: phi (n_features, n_classes) plus base."""

    phi: np.ndarray
    phi0: np.ndarray
    classes: tuple = CLASSES

    def for_class(self, level: int):
        i = self.classes.index(level)
        return self.phi[:, i], float(self.phi0[i])

    @property
    def per_class(self) -> dict:
        return {c: self.for_class(c) for c in self.classes}


def validate_covers(tree) -> None:
    if tree.cover.size == 0 or np.any(tree.cover <= 0):
        raise MissingCover("tree has empty or non-positive covers")
    internal = tree.feature >= 0
    if np.any(internal):
        idx = np.nonzero(internal)[0]
        child_sum = tree.cover[tree.left[idx]] + tree.cover[tree.right[idx]]
        if not np.allclose(child_sum, tree.cover[idx]):
            raise MissingCover("child covers do not partition their parents")


def _node_values(tree) -> np.ndarray:
    """Per-node class proportions; equals the cover-weighted leaf expectation."""
    return tree.hist / tree.cover[:, None]


# --- path-dependent kernel (hot kernel pair) ----------------------------------


def _tree_shap_impl(left, right, feature, threshold, cover, values, x, phi,
                    fi, zf, of, pw, st_node, st_u, st_off, st_pzf, st_pof, st_pfi):
    n_classes = values.shape[1]
    st_node[0] = 0
    st_u[0] = 0
    st_off[0] = 0
    st_pzf[0] = 1.0
    st_pof[0] = 1.0
    st_pfi[0] = -1
    sp = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        u = st_u[sp]
        poff = st_off[sp]
        pzf = st_pzf[sp]
        pof = st_pof[sp]
        pfi = st_pfi[sp]

        moff = poff + u + 1
        for j in range(u + 1):
            fi[moff + j] = fi[poff + j]
            zf[moff + j] = zf[poff + j]
            of[moff + j] = of[poff + j]
            pw[moff + j] = pw[poff + j]

        # extend the unique path with the incoming split fractions
        fi[moff + u] = pfi
        zf[moff + u] = pzf
        of[moff + u] = pof
        pw[moff + u] = 1.0 if u == 0 else 0.0
        for i in range(u - 1, -1, -1):
            pw[moff + i + 1] += pof * pw[moff + i] * (i + 1.0) / (u + 1.0)
            pw[moff + i] = pzf * pw[moff + i] * (u - i) / (u + 1.0)

        if left[node] < 0:
            # leaf: each path feature gets its unwound permutation weight
            for i in range(1, u + 1):
                one_f = of[moff + i]
                zero_f = zf[moff + i]
                next_one = pw[moff + u]
                total = 0.0
                for k in range(u - 1, -1, -1):
                    if one_f != 0.0:
                        tmp = next_one * (u + 1.0) / ((k + 1.0) * one_f)
                        total += tmp
                        next_one = pw[moff + k] - tmp * zero_f * (u - k) / (u + 1.0)
                    else:
                        total += (pw[moff + k] / zero_f) / ((u - k) / (u + 1.0))
                w = total * (of[moff + i] - zf[moff + i])
                f = fi[moff + i]
                for c in range(n_classes):
                    phi[f, c] += w * values[node, c]
        else:
            split = feature[node]
            if x[split] <= threshold[node]:
                hot = left[node]
                cold = right[node]
            else:
                hot = right[node]
                cold = left[node]
            hot_zero = cover[hot] / cover[node]
            cold_zero = cover[cold] / cover[node]
            inc_zero = 1.0
            inc_one = 1.0

            # undo an earlier split on the same feature before re-splitting
            path_idx = 0
            while path_idx <= u:
                if fi[moff + path_idx] == split:
                    break
                path_idx += 1
            if path_idx != u + 1:
                inc_zero = zf[moff + path_idx]
                inc_one = of[moff + path_idx]
                one_f = inc_one
                zero_f = inc_zero
                next_one = pw[moff + u]
                for k in range(u - 1, -1, -1):
                    if one_f != 0.0:
                        tmp = pw[moff + k]
                        pw[moff + k] = next_one * (u + 1.0) / ((k + 1.0) * one_f)
                        next_one = tmp - pw[moff + k] * zero_f * (u - k) / (u + 1.0)
                    else:
                        pw[moff + k] = pw[moff + k] * (u + 1.0) / (zero_f * (u - k))
                for k in range(path_idx, u):
                    fi[moff + k] = fi[moff + k + 1]
                    zf[moff + k] = zf[moff + k + 1]
                    of[moff + k] = of[moff + k + 1]
                u -= 1

            # push cold first so the hot branch is processed first
            st_node[sp] = cold
            st_u[sp] = u + 1
            st_off[sp] = moff
            st_pzf[sp] = cold_zero * inc_zero
            st_pof[sp] = 0.0
            st_pfi[sp] = split
            sp += 1
            st_node[sp] = hot
            st_u[sp] = u + 1
            st_off[sp] = moff
            st_pzf[sp] = hot_zero * inc_zero
            st_pof[sp] = inc_one
            st_pfi[sp] = split
            sp += 1


_tree_shap_kernel = select(maybe_njit()(_tree_shap_impl), _tree_shap_impl)


class _Workspace:
    def __init__(self, max_depth: int, n_features: int, n_classes: int = N_CLASSES):
        size = (max_depth + 3) * (max_depth + 4) // 2 + 2
        self.fi = np.empty(size, dtype=np.int64)
        self.zf = np.empty(size, dtype=np.float64)
        self.of = np.empty(size, dtype=np.float64)
        self.pw = np.empty(size, dtype=np.float64)
        depth = max_depth + 3
        self.st_node = np.empty(depth, dtype=np.int64)
        self.st_u = np.empty(depth, dtype=np.int64)
        self.st_off = np.empty(depth, dtype=np.int64)
        self.st_pzf = np.empty(depth, dtype=np.float64)
        self.st_pof = np.empty(depth, dtype=np.float64)
        self.st_pfi = np.empty(depth, dtype=np.int64)
        self.phi = np.zeros((n_features, n_classes))


def tree_shap(tree, x, n_features: int, workspace: _Workspace | None = None):
    """Exact path-dependent attributions for one tree at one point.

    Returns (phi, phi0): phi has shape (n_features, n_classes), and
    phi0 + phi.sum(axis=0) equals the tree's class probabilities at x.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {x.size}")
    validate_covers(tree)
    ws = workspace or _Workspace(tree.max_depth, n_features)
    ws.phi[:] = 0.0
    values = _node_values(tree)
    _tree_shap_kernel(
        tree.left.astype(np.int64),
        tree.right.astype(np.int64),
        tree.feature.astype(np.int64),
        tree.threshold,
        tree.cover,
        values,
        x,
        ws.phi,
        ws.fi,
        ws.zf,
        ws.of,
        ws.pw,
        ws.st_node,
        ws.st_u,
        ws.st_off,
        ws.st_pzf,
        ws.st_pof,
        ws.st_pfi,
    )
    return ws.phi.copy(), values[0].copy()


# --- exhaustive oracle ---------------------------------------------------------


def _subset_values(tree, x, n_features: int) -> np.ndarray:
    """v(S) for every feature subset: descend following x on S, cover-average off S."""
    n_masks = 1 << n_features
    masks = np.arange(n_masks, dtype=np.int64)
    v = np.zeros((n_masks, N_CLASSES))
    values = _node_values(tree)
    stack = [(0, np.ones(n_masks))]
    while stack:
        node, w = stack.pop()
        if tree.feature[node] < 0:
            v += w[:, None] * values[node][None, :]
            continue
        f = int(tree.feature[node])
        go_left = x[f] <= tree.threshold[node]
        bit = ((masks >> f) & 1).astype(bool)
        cf_left = tree.cover[tree.left[node]] / tree.cover[node]
        cf_right = tree.cover[tree.right[node]] / tree.cover[node]
        w_left = w * np.where(bit, 1.0 if go_left else 0.0, cf_left)
        w_right = w * np.where(bit, 0.0 if go_left else 1.0, cf_right)
        stack.append((int(tree.left[node]), w_left))
        stack.append((int(tree.right[node]), w_right))
    return v


def brute_force_shap(tree, x, n_features: int):
    """Shapley values by full subset enumeration; oracle for tree_shap.

    phi_j = sum over S not containing j of |S|!(d-|S|-1)!/d! * (v(S+j) - v(S)).
    """
    if n_features > MAX_BRUTE_FORCE_FEATURES:
        raise TooManyFeatures(f"{n_features} features exceeds 2^{MAX_BRUTE_FORCE_FEATURES} enumeration")
    x = np.asarray(x, dtype=np.float64)
    if x.size != n_features:
        raise DimensionMismatch(f"expected {n_features} features, got {x.size}")
    validate_covers(tree)
    d = n_features
    v = _subset_values(tree, x, d)
    masks = np.arange(1 << d, dtype=np.int64)
    popcount = np.zeros(masks.size, dtype=np.int64)
    for b in range(d):
        popcount += (masks >> b) & 1
    fact = np.array([math.factorial(k) for k in range(d + 1)], dtype=np.float64)
    phi = np.zeros((d, N_CLASSES))
    for j in range(d):
        without_j = masks[(masks >> j) & 1 == 0]
        s = popcount[without_j]
        weight = fact[s] * fact[d - s - 1] / fact[d]
        diff = v[without_j | (1 << j)] - v[without_j]
        phi[j] = (weight[:, None] * diff).sum(axis=0)
    return phi


def subset_value(tree, x, n_features: int, mask: int) -> np.ndarray:
    """v(S) for a single subset bitmask (exposed for efficiency-axiom tests)."""
    return _subset_values(tree, x, n_features)[mask]


# --- forest-level aggregation ---------------------------------------------------


def forest_shap(forest: RandomForest, x) -> ShapExplanation:
    """Mean of per-tree attributions, matching probability averaging."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != forest.n_features:
        raise DimensionMismatch(f"expected {forest.n_features} features, got {x.size}")
    max_depth = max(t.max_depth for t in forest.trees)
    ws = _Workspace(max_depth, forest.n_features)
    phi = np.zeros((forest.n_features, N_CLASSES))
    phi0 = np.zeros(N_CLASSES)
    for tree in forest.trees:
        p, p0 = tree_shap(tree, x, forest.n_features, workspace=ws)
        phi += p
        phi0 += p0
    n = len(forest.trees)
    return ShapExplanation(phi=phi / n, phi0=phi0 / n)


def shap_summary(forest: RandomForest, dataset, feature_names) -> tuple:
    """Aggregate attributions over a dataset.

    Returns (summary_rows, beeswarm_rows): the summary holds mean |phi| per
    class for each feature, sorted by total influence; beeswarm rows carry
    one (feature, sample, phi, value, predicted class) point each, with phi
    taken for the sample's predicted class.
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot summarize an empty dataset")
    X = dataset.X
    n, d = X.shape
    max_depth = max(t.max_depth for t in forest.trees)
    ws = _Workspace(max_depth, d)
    abs_acc = np.zeros((d, N_CLASSES))
    beeswarm = []
    proba = predict_proba(forest, X)
    pred_levels = np.asarray(CLASSES)[np.argmax(proba, axis=1)]
    for i in range(n):
        phi = np.zeros((d, N_CLASSES))
        for tree in forest.trees:
            p, _ = tree_shap(tree, X[i], d, workspace=ws)
            phi += p
        phi /= len(forest.trees)
        abs_acc += np.abs(phi)
        cls_idx = int(pred_levels[i]) - 1
        for j in range(d):
            beeswarm.append(
                {
                    "feature": feature_names[j],
                    "sample_index": i,
                    "phi": float(phi[j, cls_idx]),
                    "feature_value": float(X[i, j]),
                    "predicted_class": int(pred_levels[i]),
                }
            )
    mean_abs = abs_acc / n
    totals = mean_abs.sum(axis=1)
    order = np.argsort(-totals, kind="mergesort")
    summary = []
    for j in order:
        row = {"feature": feature_names[j], "total_mean_abs_phi": float(totals[j])}
        for c in CLASSES:
            row[f"class_{c}"] = float(mean_abs[j, c - 1])
        summary.append(row)
    return summary, beeswarm
