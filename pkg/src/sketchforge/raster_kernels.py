"""Scalar-loop silhouette rasterization kernels (numba JIT).

Same math as the torch windowed path in render.py, but the per-pair
intermediates live in registers instead of (N, K*K) tensors, which is what
the single-core budget needs. The backward pass is derived by hand:

    A(q)   = sum_j -softplus(delta_j * d2_j(q) / sigma)
    S(q)   = 1 - exp(A(q))
    dL/dA  = -gS(q) * exp(A(q))
    dL/dd2 = dL/dA * (-sigmoid(u)) * delta / sigma,   u = delta * d2 / sigma

and the squared point-to-segment distance d2 = |p - a - t (b - a)|^2 with
clamped t gives (envelope theorem; t fixed at its minimizer)

    dd2/da = -2 (1 - t) diff,   dd2/db = -2 t diff,   diff = p - closest.

Gradients flow only through the argmin edge of each pair. Correctness is
pinned by tests against the pure-torch reference and finite differences.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is expected in this env
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, fastmath=False)
def _edge_terms(ax, ay, bx, by, px, py):
    """Squared distance from (px,py) to segment a-b, plus t and cross sign."""
    abx = bx - ax
    aby = by - ay
    apx = px - ax
    apy = py - ay
    denom = abx * abx + aby * aby + 1e-12
    t = (apx * abx + apy * aby) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    dx = apx - t * abx
    dy = apy - t * aby
    d2 = dx * dx + dy * dy
    cross = abx * apy - aby * apx
    return d2, t, cross


@njit(cache=True, fastmath=False)
def silhouette_forward(tri, base, ox, oy, K, W, H, sigma, cutoff, log_acc):
    """Accumulate per-pixel sums of log(1 - D_j) into log_acc (flat B*H*W)."""
    n_faces = tri.shape[0]
    for n in range(n_faces):
        x0, y0 = tri[n, 0, 0], tri[n, 0, 1]
        x1, y1 = tri[n, 1, 0], tri[n, 1, 1]
        x2, y2 = tri[n, 2, 0], tri[n, 2, 1]
        for wy in range(K):
            iy = oy[n] + wy
            pyc = 1.0 - (iy + 0.5) * 2.0 / H
            row = base[n] + iy * W
            for wx in range(K):
                ix = ox[n] + wx
                pxc = (ix + 0.5) * 2.0 / W - 1.0
                d0, _, c0 = _edge_terms(x0, y0, x1, y1, pxc, pyc)
                d1, _, c1 = _edge_terms(x1, y1, x2, y2, pxc, pyc)
                d2_, _, c2 = _edge_terms(x2, y2, x0, y0, pxc, pyc)
                dmin = d0
                if d1 < dmin:
                    dmin = d1
                if d2_ < dmin:
                    dmin = d2_
                inside = c0 >= 0.0 and c1 >= 0.0 and c2 >= 0.0
                u = dmin / sigma if inside else -dmin / sigma
                if u <= -cutoff:
                    continue
                # stable softplus
                if u > 0.0:
                    sp = u + math.log1p(math.exp(-u))
                else:
                    sp = math.log1p(math.exp(u))
                log_acc[row + ix] -= sp


@njit(cache=True, fastmath=False)
def silhouette_backward(
    tri, base, ox, oy, K, W, H, sigma, cutoff, log_acc, grad_s, grad_tri
):
    """Scatter dL/dS back to the 2-D triangle vertices (grad_tri (N,3,2))."""
    n_faces = tri.shape[0]
    for n in range(n_faces):
        x0, y0 = tri[n, 0, 0], tri[n, 0, 1]
        x1, y1 = tri[n, 1, 0], tri[n, 1, 1]
        x2, y2 = tri[n, 2, 0], tri[n, 2, 1]
        for wy in range(K):
            iy = oy[n] + wy
            pyc = 1.0 - (iy + 0.5) * 2.0 / H
            row = base[n] + iy * W
            for wx in range(K):
                ix = ox[n] + wx
                pxc = (ix + 0.5) * 2.0 / W - 1.0
                d0, t0, c0 = _edge_terms(x0, y0, x1, y1, pxc, pyc)
                d1, t1, c1 = _edge_terms(x1, y1, x2, y2, pxc, pyc)
                d2_, t2, c2 = _edge_terms(x2, y2, x0, y0, pxc, pyc)
                k = 0
                dmin = d0
                t = t0
                if d1 < dmin:
                    dmin, t, k = d1, t1, 1
                if d2_ < dmin:
                    dmin, t, k = d2_, t2, 2
                inside = c0 >= 0.0 and c1 >= 0.0 and c2 >= 0.0
                delta = 1.0 if inside else -1.0
                u = delta * dmin / sigma
                if u <= -cutoff:
                    continue
                q = row + ix
                g_s = grad_s[q]
                if g_s == 0.0:
                    continue
                # dL/dd2 = -gS * exp(A) * (-sigmoid(u)) * delta / sigma
                sig = 1.0 / (1.0 + math.exp(-u))
                coeff = g_s * math.exp(log_acc[q]) * sig * delta / sigma
                if k == 0:
                    ax, ay, bx, by = x0, y0, x1, y1
                    ia, ib = 0, 1
                elif k == 1:
                    ax, ay, bx, by = x1, y1, x2, y2
                    ia, ib = 1, 2
                else:
                    ax, ay, bx, by = x2, y2, x0, y0
                    ia, ib = 2, 0
                dx = (pxc - ax) - t * (bx - ax)
                dy = (pyc - ay) - t * (by - ay)
                ga = -2.0 * (1.0 - t) * coeff
                gb = -2.0 * t * coeff
                grad_tri[n, ia, 0] += ga * dx
                grad_tri[n, ia, 1] += ga * dy
                grad_tri[n, ib, 0] += gb * dx
                grad_tri[n, ib, 1] += gb * dy


def warmup():
    """Trigger JIT compilation with a tiny scene (idempotent)."""
    if not HAVE_NUMBA:
        return
    tri = np.array([[[-0.5, -0.5], [0.5, -0.5], [0.0, 0.5]]])
    base = np.zeros(1, dtype=np.int64)
    o = np.zeros(1, dtype=np.int64)
    acc = np.zeros(16, dtype=np.float64)
    silhouette_forward(tri, base, o, o, 4, 4, 4, 1e-2, 25.0, acc)
    grad = np.ones(16, dtype=np.float64)
    gtri = np.zeros_like(tri)
    silhouette_backward(tri, base, o, o, 4, 4, 4, 1e-2, 25.0, acc, grad, gtri)
