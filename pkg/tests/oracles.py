"""Independent reference implementations used as test oracles.

Every function here recomputes its result from the operation's definition by
direct enumeration (per-pixel loops, per-cut scans, queue-based flood fill),
deliberately avoiding the vectorized/cumulative strategies of the production
code paths they check.
"""

import numpy as np
from numba import njit

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def naive_sobel(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            gx = gy = 0.0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    gx += SOBEL_X[dr + 1, dc + 1] * grid[rr, cc]
                    gy += SOBEL_Y[dr + 1, dc + 1] * grid[rr, cc]
            out[r, c] = np.hypot(gx, gy)
    return out


def naive_box_blur(channel: np.ndarray, radius: int) -> np.ndarray:
    channel = np.asarray(channel, dtype=np.float64)
    h, w = channel.shape
    k = 2 * radius + 1
    out = np.zeros((h, w))
    for r in range(h):
        for c in range(w):
            acc = 0.0
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    acc += channel[rr, cc]
            out[r, c] = acc / (k * k)
    return out


def naive_bilinear(src: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Per-pixel half-pixel-center bilinear interpolation of one channel."""
    sh, sw = src.shape
    out = np.zeros((th, tw))
    for r in range(th):
        for c in range(tw):
            ys = min(max((r + 0.5) * sh / th - 0.5, 0.0), sh - 1.0)
            xs = min(max((c + 0.5) * sw / tw - 0.5, 0.0), sw - 1.0)
            y0, x0 = int(np.floor(ys)), int(np.floor(xs))
            y1, x1 = min(y0 + 1, sh - 1), min(x0 + 1, sw - 1)
            fy, fx = ys - y0, xs - x0
            out[r, c] = (
                src[y0, x0] * (1 - fy) * (1 - fx)
                + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx)
                + src[y1, x1] * fy * fx
            )
    return out


@njit(cache=False)
def _bfs_label(grid, labels):
    h, w = grid.shape
    queue = np.empty(h * w, dtype=np.int64)
    next_label = 0
    for r in range(h):
        for c in range(w):
            if grid[r, c] == 0 or labels[r, c] != 0:
                continue
            next_label += 1
            labels[r, c] = next_label
            head = 0
            tail = 0
            queue[tail] = r * w + c
            tail += 1
            while head < tail:
                flat = queue[head]
                head += 1
                cr = flat // w
                cc = flat % w
                for dr in range(-1, 2):
                    for dc in range(-1, 2):
                        nr = cr + dr
                        nc = cc + dc
                        if 0 <= nr < h and 0 <= nc < w:
                            if grid[nr, nc] != 0 and labels[nr, nc] == 0:
                                labels[nr, nc] = next_label
                                queue[tail] = nr * w + nc
                                tail += 1
    return next_label


def flood_fill_label(grid: np.ndarray) -> tuple[np.ndarray, int]:
    """Queue-based BFS flood fill with 8-connectivity."""
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    labels = np.zeros(grid.shape, dtype=np.int64)
    count = _bfs_label(grid, labels)
    return labels, int(count)


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel components by first occurrence in row-major order so two
    labelings can be compared as partitions."""
    mapping: dict[int, int] = {}
    out = np.zeros_like(labels, dtype=np.int64)
    next_id = 0
    flat = labels.ravel()
    canon = out.ravel()
    for i in range(flat.size):
        v = int(flat[i])
        if v == 0:
            continue
        if v not in mapping:
            next_id += 1
            mapping[v] = next_id
        canon[i] = mapping[v]
    return out


def brute_force_otsu(values: np.ndarray) -> tuple[float, bool]:
    """Exhaustive search over all 256 cut points, recomputing the class
    statistics per cut by direct slicing of the histogram."""
    values = np.asarray(values, dtype=np.float64).ravel()
    bins = np.clip(np.floor(values * 256), 0, 255).astype(np.int64)
    hist = np.bincount(bins, minlength=256).astype(np.float64)
    centers = (np.arange(256) + 0.5) / 256
    total = hist.sum()
    best_var = 0.0
    best_t = 0
    for t in range(256):
        n0 = hist[:t].sum()
        n1 = hist[t:].sum()
        if n0 == 0 or n1 == 0:
            continue
        mu0 = (hist[:t] * centers[:t]).sum() / n0
        mu1 = (hist[t:] * centers[t:]).sum() / n1
        var = (n0 / total) * (n1 / total) * (mu0 - mu1) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    if best_var == 0.0:
        return 0.0, True
    return float(centers[best_t]), False


def counting_cdf(channel: np.ndarray) -> np.ndarray:
    """CDF by direct counting per intensity value."""
    flat = channel.ravel()
    out = np.zeros(256)
    for v in range(256):
        out[v] = np.count_nonzero(flat <= v) / flat.size
    return out


def ks_distance(channel_a: np.ndarray, channel_b: np.ndarray) -> float:
    """Max absolute CDF difference over the 256 intensity levels."""
    return float(np.abs(counting_cdf(channel_a) - counting_cdf(channel_b)).max())


def percentile_closest_ranks(values: list[float], p: float) -> float:
    """Linear interpolation between closest ranks, computed by hand."""
    ordered = sorted(values)
    if len(ordered) == 1:
        return ordered[0]
    rank = (p / 100.0) * (len(ordered) - 1)
    lo = int(np.floor(rank))
    hi = int(np.ceil(rank))
    frac = rank - lo
    return ordered[lo] * (1 - frac) + ordered[hi] * frac


def loop_confusion(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    tp = fp = fn = tn = 0
    for r in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            if pred[r, c] and gt[r, c]:
                tp += 1
            elif pred[r, c] and not gt[r, c]:
                fp += 1
            elif not pred[r, c] and gt[r, c]:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def loop_mask_pool(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-channel mean over set pixels by explicit iteration."""
    c, h, w = features.shape
    acc = np.zeros(c)
    count = 0
    for r in range(h):
        for col in range(w):
            if mask[r, col]:
                count += 1
                for ch in range(c):
                    acc[ch] += features[ch, r, col]
    return acc / count
