"""Independent brute-force references used to cross-check the package.

Everything here is deliberately written with plain Python loops and the
math module, not numpy, and must stay independent of src/fuserank.
"""
import math


def pad_grid(grid, padding, fill=0.0):
    h = len(grid)
    w = len(grid[0])
    out = [[fill] * (w + 2 * padding) for _ in range(h + 2 * padding)]
    for i in range(h):
        for j in range(w):
            out[i + padding][j + padding] = grid[i][j]
    return out


def ref_cross_correlate2d(grid, kernel, stride=1, padding=0):
    padded = pad_grid(grid, padding)
    kh = len(kernel)
    kw = len(kernel[0])
    oh = (len(padded) - kh) // stride + 1
    ow = (len(padded[0]) - kw) // stride + 1
    out = [[0.0] * ow for _ in range(oh)]
    for i in range(oh):
        for j in range(ow):
            acc = 0.0
            for m in range(kh):
                for n in range(kw):
                    acc += padded[i * stride + m][j * stride + n] * kernel[m][n]
            out[i][j] = acc
    return out


def ref_convolve2d(grid, kernel, stride=1, padding=0):
    flipped = [row[::-1] for row in kernel[::-1]]
    return ref_cross_correlate2d(grid, flipped, stride=stride, padding=padding)


def ref_pool2d(grid, window, stride, mode, padding=0):
    fill = -math.inf if mode == "max" else 0.0
    padded = pad_grid(grid, padding, fill=fill)
    oh = (len(padded) - window) // stride + 1
    ow = (len(padded[0]) - window) // stride + 1
    out = [[0.0] * ow for _ in range(oh)]
    for i in range(oh):
        for j in range(ow):
            cells = [padded[i * stride + m][j * stride + n]
                     for m in range(window) for n in range(window)]
            out[i][j] = max(cells) if mode == "max" else sum(cells) / len(cells)
    return out


def ref_convolve1d(x, w):
    out = [0.0] * (len(x) + len(w) - 1)
    for t in range(len(out)):
        acc = 0.0
        for a in range(len(x)):
            if 0 <= t - a < len(w):
                acc += x[a] * w[t - a]
        out[t] = acc
    return out


def ref_mean(values):
    return sum(values) / len(values)


def ref_sample_variance(values):
    mu = ref_mean(values)
    return sum((v - mu) ** 2 for v in values) / (len(values) - 1)


def ref_welch_t(class1, class2, eps=1e-12):
    num = ref_mean(class1) - ref_mean(class2)
    den = math.sqrt(ref_sample_variance(class1) / len(class1)
                    + ref_sample_variance(class2) / len(class2) + eps)
    return num / den


def ref_rank(columns_class1, columns_class2):
    """Rank features by |t| descending, ties by index; returns (order, ts)."""
    ts = [ref_welch_t(a, b) for a, b in zip(columns_class1, columns_class2)]
    order = sorted(range(len(ts)), key=lambda i: (-abs(ts[i]), i))
    return order, ts
