"""Pure-numpy reference for the regression kernels.

Both families reduce to the same mixture once their low-rank factors are
materialised:

    g(x) = sum_h pi[h] sum_j softmax_j(x^T S[h, j] x + c[j]) * V[h, j] @ x

``S[h, j]`` is the effective query-key bilinear form and ``V[h, j]`` the
effective value map, each ``d x d``.
"""
import numpy as np


def _gates(X, c, S):
    scores = np.einsum("na,hjab,nb->nhj", X, S, X, optimize=True) + c
    scores -= scores.max(axis=2, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=2, keepdims=True)
    return w


def mixture_forward(X, pi, c, S, V):
    """Return ``(g, gates)`` with ``g`` of shape ``(n, d)`` and gates ``(n, H, L)``."""
    w = _gates(X, c, S)
    U = np.einsum("hjab,nb->nhja", V, X, optimize=True)
    m = np.einsum("nhj,nhja->nha", w, U, optimize=True)
    return np.einsum("h,nha->na", pi, m), w


def objective_grad(X, Y, pi, c, S, V, need_grad=True):
    """Sum of squared residuals and its gradient w.r.t. ``pi, c, S, V``."""
    w = _gates(X, c, S)
    U = np.einsum("hjab,nb->nhja", V, X, optimize=True)
    m = np.einsum("nhj,nhja->nha", w, U, optimize=True)
    e = np.einsum("h,nha->na", pi, m) - Y
    obj = float(np.sum(e * e))
    if not need_grad:
        return obj, None
    a = 2.0 * pi[None, :, None] * e[:, None, :]
    dpi = 2.0 * np.einsum("na,nha->h", e, m)
    dw = np.einsum("nha,nhja->nhj", a, U, optimize=True)
    am = np.einsum("nha,nha->nh", a, m)
    ds = w * (dw - am[:, :, None])
    dc = ds.sum(axis=(0, 1))
    dS = np.einsum("nhj,na,nb->hjab", ds, X, X, optimize=True)
    dV = np.einsum("nhj,nha,nb->hjab", w, a, X, optimize=True)
    return obj, (dpi, dc, dS, dV)
