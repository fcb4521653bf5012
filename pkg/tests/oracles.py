"""Reference computations the package code is checked against. Each is written
independently of the implementation it verifies (no shared helpers)."""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def negacyclic_product(a, b, m):
    """Full polynomial product, then division by X^d + 1 via long division."""
    d = len(a)
    full = [0] * (2 * d - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            full[i + j] += int(x) * int(y)
    # X^k for k >= d: X^k = X^(k-d) * X^d = -X^(k-d)
    for k in range(2 * d - 2, d - 1, -1):
        full[k - d] -= full[k]
        full[k] = 0
    return [c % m for c in full[:d]]


def reference_cw(weight, approvers, clamp=True):
    """Cumulative weight from (accuracy, approver weight) pairs, exact rationals."""
    if not approvers:
        return weight
    w = Fraction(weight)
    bonus = sum((Fraction(acc) - w) * Fraction(wj) for acc, wj in approvers) / len(approvers)
    cw = w + bonus
    return float(max(cw, w) if clamp else cw)


def tip_law(children: dict, cw: dict, start) -> dict:
    """Exact probability that a walk from ``start`` ends at each tip.

    ``children[x]`` lists the transactions approving x; each step picks y with
    probability proportional to exp(CW(y) - CW(x)). Enumerates every path.
    """
    law: dict = {}

    def visit(x, p):
        kids = children.get(x, [])
        if not kids:
            law[x] = law.get(x, 0.0) + p
            return
        weights = [math.exp(cw[y] - cw[x]) for y in kids]
        total = sum(weights)
        for y, wy in zip(kids, weights):
            visit(y, p * wy / total)

    visit(start, 1.0)
    return law


def finite_difference_grad(f, w, h=1e-6):
    w = np.array(w, dtype=np.float64)
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def softmax_ce_loss(w, X, y, n_classes):
    """Mean softmax cross-entropy written out sample by sample."""
    F = X.shape[1]
    W = np.asarray(w).reshape(F + 1, n_classes)
    total = 0.0
    for xi, yi in zip(X, y):
        z = np.append(xi, 1.0) @ W
        zmax = max(z)
        lse = zmax + math.log(sum(math.exp(v - zmax) for v in z))
        total += lse - z[yi]
    return total / len(y)


def quantized_sum(gs, scale, clip):
    """Exact integer sum of round(clip(g) * scale), dequantized."""
    acc = np.zeros(len(gs[0]), dtype=object)
    for g in gs:
        for k, v in enumerate(g):
            v = min(max(float(v), -clip), clip)
            acc[k] += int(round(v * scale))
    return np.array([float(Fraction(int(x), scale)) for x in acc])
