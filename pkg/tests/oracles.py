"""Independent reference implementations used as test oracles.

Each one is written from the plain definitions with loops and fractions so
it shares no code path with the package.
"""
from fractions import Fraction
import math


def count_pairs(truth, pred, positive=1):
    tp = fp = fn = tn = 0
    for t, p in zip(truth, pred):
        if t == positive and p == positive:
            tp += 1
        elif t != positive and p == positive:
            fp += 1
        elif t == positive and p != positive:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def prf(tp, fp, fn):
    """(precision, recall, f1) as floats plus their zero-denominator flags."""
    flags = []
    if tp + fp == 0:
        p = Fraction(0)
        flags.append("precision")
    else:
        p = Fraction(tp, tp + fp)
    if tp + fn == 0:
        r = Fraction(0)
        flags.append("recall")
    else:
        r = Fraction(tp, tp + fn)
    if p + r == 0:
        f = Fraction(0)
        flags.append("f1")
    else:
        f = 2 * p * r / (p + r)
    return float(p), float(r), float(f), flags


def pair_auc(labels, scores):
    pos = [s for l, s in zip(labels, scores) if l == 1]
    neg = [s for l, s in zip(labels, scores) if l == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else (0.5 if a == b else 0.0)
    return total / (len(pos) * len(neg))


def shoelace(points):
    s = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


def rule_population(res, area, h):
    """Occupancy heuristic written straight from its prose description."""
    if res == 0:
        return 0
    floors = int(h // 3)
    if floors < 1:
        floors = 1
    if area < 50 or h < 4:
        per_floor = 4
    elif area < 150 or h < 10:
        per_floor = 6
    else:
        per_floor = 10
    return floors * per_floor


def sorted_quantile(values, q):
    """Linear-interpolation quantile from a sorted copy."""
    v = sorted(values)
    pos = q * (len(v) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)
