"""Pure numpy versions of the hot kernels (fallback for ``_kernels``)."""

import numpy as np
import scipy.sparse as sp


def schur_psd_block(W, ptr, ii, jj, vv, eq, M):
    """Accumulate ``M[p, q] += <A_p, W A_q W>`` over one PSD block.

    ``A_p`` for local equation ``p`` is given in CSR form by
    ``ptr``/``ii``/``jj``/``vv`` with both triangles stored; ``eq`` maps
    local equations to rows of ``M``.
    """
    n = W.shape[0]
    neq = eq.shape[0]
    if neq == 0:
        return
    counts = np.diff(ptr)
    rows = np.repeat(np.arange(neq), counts)
    stack = np.zeros((neq, n, n))
    stack[rows, ii, jj] = vv
    T = np.matmul(np.matmul(W, stack), W).reshape(neq, n * n)
    S = sp.csr_matrix((vv, (rows, ii.astype(np.int64) * n + jj)), shape=(neq, n * n))
    M[np.ix_(eq, eq)] += S @ T.T


def upwind_step(r, speeds, dt, dx, B, G, kappa, nonlinear):
    """One explicit upwind step for the diagonal system with boundary closures.

    ``r`` has shape ``(nodes, 12)``; the first six components travel left
    (speed ``speeds[i] < 0``), the last six right.
    """
    src = -r @ B.T
    if nonlinear:
        src += np.einsum("nj,ijk,nk->ni", r, G, r, optimize=True)
    out = r + dt * src
    lam = np.abs(speeds) * dt / dx
    left = speeds < 0
    right = ~left
    # leftward movers look downstream to j+1, rightward to j-1
    out[:-1, left] += lam[left] * (r[1:, left] - r[:-1, left])
    out[1:, right] -= lam[right] * (r[1:, right] - r[:-1, right])
    out[-1, :6] = -out[-1, 6:]
    out[0, 6:] = kappa @ out[0, :6]
    return out
