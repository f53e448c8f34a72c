"""Slow, obviously-correct references the fast code is checked against."""
from collections import deque

import numpy as np

N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
N8 = N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def flood_labels(ink):
    """BFS labeling: ink 8-connected, paper 4-connected, numbered by raster seed."""
    ink = np.asarray(ink, dtype=bool)
    h, w = ink.shape
    lab = np.full((h, w), -1, dtype=np.int64)
    n = 0
    for y in range(h):
        for x in range(w):
            if lab[y, x] >= 0:
                continue
            c = ink[y, x]
            steps = N8 if c else N4
            lab[y, x] = n
            q = deque([(y, x)])
            while q:
                cy, cx = q.popleft()
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and lab[ny, nx] < 0 and ink[ny, nx] == c:
                        lab[ny, nx] = n
                        q.append((ny, nx))
            n += 1
    return lab, n


def _reach_from_outside(blocked, steps):
    """Pixels reachable from beyond the image edge without entering ``blocked``."""
    h, w = blocked.shape
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = blocked
    seen = np.zeros_like(pad)
    seen[0, 0] = True
    q = deque([(0, 0)])
    while q:
        cy, cx = q.popleft()
        for dy, dx in steps:
            ny, nx = cy + dy, cx + dx
            if 0 <= ny < h + 2 and 0 <= nx < w + 2 and not seen[ny, nx] and not pad[ny, nx]:
                seen[ny, nx] = True
                q.append((ny, nx))
    return seen[1:-1, 1:-1]


def enclosing_parents(ink):
    """Parent of every component by containment.

    For a component R not touching the border, flood from outside the
    image through everything except R, moving with the connectivity of
    R's complement. The parent is the component of the reached pixels
    that sit next to R. Border components get None.
    """
    ink = np.asarray(ink, dtype=bool)
    lab, n = flood_labels(ink)
    h, w = ink.shape
    parents = {}
    for r in range(n):
        mask = lab == r
        ys, xs = np.nonzero(mask)
        if ys.min() == 0 or xs.min() == 0 or ys.max() == h - 1 or xs.max() == w - 1:
            parents[r] = None
            continue
        is_ink = bool(ink[ys[0], xs[0]])
        outside = _reach_from_outside(mask, N4 if is_ink else N8)
        touching = set()
        for y, x in zip(ys, xs):
            for dy, dx in N4:
                ny, nx = y + dy, x + dx
                if not mask[ny, nx] and outside[ny, nx]:
                    touching.add(int(lab[ny, nx]))
        assert len(touching) == 1, f"component {r} has outer neighbours {touching}"
        parents[r] = touching.pop()
    return lab, parents
