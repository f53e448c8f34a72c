"""Compiled batch feature extraction for the window scanner.

Re-implements threshold -> label -> region-parent -> statistics in one
pass per window. ``detector.reference_features`` computes the same
values through the public imaging primitives and the two are checked
against each other in the test suite.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _find(uf, a):
    root = a
    while uf[root] != root:
        root = uf[root]
    while uf[a] != root:
        nxt = uf[a]
        uf[a] = root
        a = nxt
    return root


@njit(cache=True)
def _union(uf, a, b):
    ra = _find(uf, a)
    rb = _find(uf, b)
    # smaller flat index wins, so every root is its component's first raster pixel
    if ra < rb:
        uf[rb] = ra
    elif rb < ra:
        uf[ra] = rb


@njit(cache=True)
def _window(luma, x0, y0, w, h, offset, edge_threshold, out):
    n_px = w * h
    r = max(15, min(w, h) // 16)

    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    for i in range(h):
        row = 0
        for j in range(w):
            row += luma[y0 + i, x0 + j]
            sat[i + 1, j + 1] = sat[i, j + 1] + row

    ink = np.zeros(n_px, dtype=np.bool_)
    n_ink = 0
    for i in range(h):
        a0 = max(i - r, 0)
        a1 = min(i + r + 1, h)
        for j in range(w):
            b0 = max(j - r, 0)
            b1 = min(j + r + 1, w)
            cnt = (a1 - a0) * (b1 - b0)
            tot = sat[a1, b1] - sat[a0, b1] - sat[a1, b0] + sat[a0, b0]
            v = np.int64(luma[y0 + i, x0 + j])
            if v * cnt < tot - offset * cnt:
                ink[i * w + j] = True
                n_ink += 1

    uf = np.arange(n_px)
    for i in range(h):
        for j in range(w):
            p = i * w + j
            c = ink[p]
            if j > 0 and ink[p - 1] == c:
                _union(uf, p, p - 1)
            if i > 0:
                if ink[p - w] == c:
                    _union(uf, p, p - w)
                if c:
                    if j > 0 and ink[p - w - 1]:
                        _union(uf, p, p - w - 1)
                    if j < w - 1 and ink[p - w + 1]:
                        _union(uf, p, p - w + 1)

    lab = np.empty(n_px, dtype=np.int64)
    first = np.empty(n_px, dtype=np.int64)
    n = 0
    for p in range(n_px):
        rt = _find(uf, p)
        if rt == p:
            lab[p] = n
            first[n] = p
            n += 1
        else:
            lab[p] = lab[rt]

    border = np.zeros(n, dtype=np.bool_)
    for j in range(w):
        border[lab[j]] = True
        border[lab[(h - 1) * w + j]] = True
    for i in range(h):
        border[lab[i * w]] = True
        border[lab[i * w + w - 1]] = True
    n_border = 0
    root = -1
    for k in range(n):
        if border[k]:
            n_border += 1
            root = k
    virtual = n_border > 1
    if virtual:
        root = n

    parent = np.empty(n, dtype=np.int64)
    for k in range(n):
        if border[k]:
            parent[k] = n if virtual else -1
        else:
            parent[k] = lab[first[k] - w]

    children = np.zeros(n + 1, dtype=np.int64)
    for k in range(n):
        if parent[k] >= 0:
            children[parent[k]] += 1

    holes = 0
    ink_nodes = 0
    leaves = 0
    for k in range(n):
        if ink[first[k]]:
            ink_nodes += 1
            holes += children[k]
        if children[k] == 0:
            leaves += 1

    depth = np.zeros(n, dtype=np.int64)
    max_depth = 0
    chains = 0
    for k in range(n):
        q = parent[k]
        if q < 0:
            continue
        if q == n:
            depth[k] = 1
        else:
            depth[k] = depth[q] + 1
            g = parent[q]
            if g >= 0 and g < n and g != root:
                chains += 1
        if depth[k] > max_depth:
            max_depth = depth[k]

    # np.gradient: central differences inside, one-sided at the edges
    edges = 0
    if h > 1 and w > 1:
        for i in range(h):
            for j in range(w):
                if j == 0:
                    gx = float(luma[y0 + i, x0 + 1]) - float(luma[y0 + i, x0])
                elif j == w - 1:
                    gx = float(luma[y0 + i, x0 + j]) - float(luma[y0 + i, x0 + j - 1])
                else:
                    gx = (float(luma[y0 + i, x0 + j + 1]) - float(luma[y0 + i, x0 + j - 1])) / 2.0
                if i == 0:
                    gy = float(luma[y0 + 1, x0 + j]) - float(luma[y0, x0 + j])
                elif i == h - 1:
                    gy = float(luma[y0 + i, x0 + j]) - float(luma[y0 + i - 1, x0 + j])
                else:
                    gy = (float(luma[y0 + i + 1, x0 + j]) - float(luma[y0 + i - 1, x0 + j])) / 2.0
                if np.sqrt(gx * gx + gy * gy) > edge_threshold:
                    edges += 1

    total = 0.0
    for i in range(h):
        for j in range(w):
            total += float(luma[y0 + i, x0 + j])
    mean = total / n_px
    ss = 0.0
    for i in range(h):
        for j in range(w):
            d = float(luma[y0 + i, x0 + j]) - mean
            ss += d * d

    kpx = n_px / 1000.0
    out[0] = n_ink / n_px
    out[1] = n / kpx
    out[2] = holes / ink_nodes if ink_nodes > 0 else 0.0
    out[3] = leaves / n
    out[4] = min(max_depth / 5.0, 1.0)
    out[5] = chains / kpx
    out[6] = edges / n_px
    out[7] = (ss / n_px) / (128.0 * 128.0)


@njit(cache=True)
def batch_features(luma, boxes, offset, edge_threshold):
    out = np.empty((boxes.shape[0], 8), dtype=np.float64)
    for b in range(boxes.shape[0]):
        _window(luma, boxes[b, 0], boxes[b, 1], boxes[b, 2], boxes[b, 3],
                offset, edge_threshold, out[b])
    return out


def features_for_boxes(luma: np.ndarray, boxes, offset=5, edge_threshold=24.0) -> np.ndarray:
    arr = np.asarray(boxes, dtype=np.int64).reshape(-1, 4)
    return batch_features(np.ascontiguousarray(luma, dtype=np.uint8), arr,
                          np.int64(offset), float(edge_threshold))
