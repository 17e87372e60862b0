"""Per-pixel breadth-first search reference for nearest-label fill."""

from collections import deque

import numpy as np


def nearest_label_fill(mask: np.ndarray, retain: set) -> np.ndarray:
    """Each removed pixel independently searches through removed pixels for
    the closest kept label; ties go to the smaller label; unreachable -> 0."""
    H, W = mask.shape
    removed = (mask != 0) & ~np.isin(mask, list(retain))
    out = mask.copy()
    out[removed] = 0
    for i in range(H):
        for j in range(W):
            if not removed[i, j]:
                continue
            dist = {(i, j): 0}
            q = deque([(i, j)])
            best_d, best_lab = None, 0
            while q:
                a, b = q.popleft()
                d = dist[(a, b)]
                if best_d is not None and d >= best_d:
                    break
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    y, x = a + da, b + db
                    if not (0 <= y < H and 0 <= x < W) or (y, x) in dist:
                        continue
                    if removed[y, x]:
                        dist[(y, x)] = d + 1
                        q.append((y, x))
                    elif mask[y, x] != 0:
                        lab = int(mask[y, x])
                        if best_d is None or d + 1 < best_d or (d + 1 == best_d and lab < best_lab):
                            best_d, best_lab = d + 1, lab
            out[i, j] = best_lab
    return out
