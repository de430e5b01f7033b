#!/usr/bin/env python3
"""Regenerate shepp_vardi_128.pgm.

Region ids: 1 background (outside the head included), 2 brain tissue,
3 ventricles, 4 small lesion, 5 skull ring. Each nested structure takes the
N pixels with the smallest normalized elliptical radius so the region sizes
are exact: 9614, 5351, 701, 14, 704.
"""
import math
import sys

N = 128
SIZES = {"head": 6770, "brain": 6066, "ventricles": 701, "lesion": 14}


def radius(x, y, cx, cy, a, b, deg):
    t = math.radians(deg)
    dx, dy = x - cx, y - cy
    u = dx * math.cos(t) + dy * math.sin(t)
    v = -dx * math.sin(t) + dy * math.cos(t)
    return math.hypot(u / a, v / b)


def pick(candidates, key, count):
    ranked = sorted(candidates, key=lambda p: (key(p), p))
    return set(ranked[:count])


def main(path):
    pixels = [(r, c) for r in range(N) for c in range(N)]

    def xy(p):
        r, c = p
        return (c + 0.5) / (N / 2) - 1.0, 1.0 - (r + 0.5) / (N / 2)

    head = pick(pixels, lambda p: radius(*xy(p), 0.0, 0.0, 0.69, 0.92, 0.0), SIZES["head"])
    brain = pick(head, lambda p: radius(*xy(p), 0.0, -0.0184, 0.6624, 0.874, 0.0), SIZES["brain"])
    vent = pick(
        brain,
        lambda p: min(
            radius(*xy(p), 0.22, 0.0, 0.11, 0.31, -18.0),
            radius(*xy(p), -0.22, 0.0, 0.16, 0.41, 18.0),
        ),
        SIZES["ventricles"],
    )
    lesion = pick(brain - vent, lambda p: radius(*xy(p), 0.0, 0.35, 0.046, 0.046, 0.0), SIZES["lesion"])

    labels = [[1] * N for _ in range(N)]
    for r, c in head:
        labels[r][c] = 5
    for r, c in brain:
        labels[r][c] = 2
    for r, c in vent:
        labels[r][c] = 3
    for r, c in lesion:
        labels[r][c] = 4

    counts = {k: sum(row.count(k) for row in labels) for k in range(1, 6)}
    assert counts == {1: 9614, 2: 5351, 3: 701, 4: 14, 5: 704}, counts
    with open(path, "wb") as f:
        f.write(b"P5\n# Shepp-Vardi style regions 1-5\n128 128\n255\n")
        f.write(bytes(v for row in labels for v in row))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "shepp_vardi_128.pgm")
