"""Independent reference implementations used only by the tests.

Nothing here imports the package's program assembly or solver: the beam
matrices are rebuilt from their closed forms, the inner program is written
directly in cvxpy, and SDPA files are parsed back with a tiny reader.
"""

import numpy as np


def unit_beam_matrices():
    """Closed-form unit-beam matrices (no curvature)."""
    s = np.sqrt(0.5)
    d = np.array([1.0, 1.0, 1.0, s, 1.0, 1.0])
    D = np.diag(d)
    I6 = np.eye(6)
    Z = np.zeros((6, 6))
    M = np.diag([1.0, 1.0, 1.0, 2.0, 1.0, 1.0])
    E = np.zeros((6, 6))
    # hat(e1) blocks: E = [[0, 0], [hat(e1), 0]]
    E[4, 2] = -1.0
    E[5, 1] = 1.0
    Bbar = np.block([[Z, -np.linalg.inv(M) @ E], [E.T, Z]])
    L = np.block([[I6, D], [I6, -D]])
    Linv = np.linalg.inv(L)
    B = L @ Bbar @ Linv
    return {"M": M, "D": D, "d": d, "E": E, "Bbar": Bbar, "L": L, "Linv": Linv, "B": B}


def cvxpy_inner_program(gamma, nu, degree_q=4, degree_s=4, eps1=1e-6, solver="CLARABEL"):
    """Inner SOS program on ``[0, 1]`` written directly in cvxpy.

    Returns ``(status, beta, q_coeffs (12, n+1), kappa_tilde)``.
    """
    import cvxpy as cp

    mats = unit_beam_matrices()
    B = mats["B"]
    d = np.concatenate([-mats["d"], mats["d"]])
    nq, ns = degree_q, degree_s + (degree_s % 2)
    deg = max(nq, ns + 2)
    deg += deg % 2
    m = deg // 2

    q = cp.Variable((12, nq + 1))
    beta = cp.Variable()
    kt = cp.Variable((6, 6))
    cons = []

    def gram_coeffs(W, size):
        out = []
        for k in range(2 * size + 1):
            acc = 0
            for a in range(size + 1):
                b = k - a
                if 0 <= b <= size:
                    acc = acc + W[a, b]
            out.append(acc)
        return out

    def multiplier():
        W = cp.Variable((ns // 2 + 1, ns // 2 + 1), PSD=True)
        coeffs = gram_coeffs(W, ns // 2)
        out = [0] * (len(coeffs) + 2)
        for i, c in enumerate(coeffs):
            out[i + 1] = out[i + 1] - c
            out[i + 2] = out[i + 2] + c
        return out

    def coef(lst, k):
        return lst[k] if k < len(lst) else 0

    s1, s2, s3 = multiplier(), multiplier(), multiplier()
    W = cp.Variable((12 * (m + 1), 12 * (m + 1)), PSD=True)
    for i in range(12):
        for j in range(i, 12):
            for k in range(deg + 1):
                e = 0
                if i == j:
                    if k + 1 <= nq:
                        e = e - d[i] * (k + 1) * q[i, k + 1]
                    if k <= nq:
                        e = e + 2 * B[i, i] * q[i, k]
                    if k == 0:
                        e = e - beta
                    e = e + coef(s1, k)
                elif k <= nq and (B[i, j] != 0 or B[j, i] != 0):
                    e = q[i, k] * B[i, j] + q[j, k] * B[j, i]
                g = 0
                for a in range(m + 1):
                    b = k - a
                    if 0 <= b <= m:
                        g = g + W[i * (m + 1) + a, j * (m + 1) + b]
                cons.append(e == g)
    for i in range(6):
        cons.append(cp.sum(q[i + 6, :]) >= cp.sum(q[i, :]))
    QmD = cp.diag(cp.hstack([q[i, 0] * mats["d"][i] for i in range(6)]))
    Z = cp.Variable((12, 12), PSD=True)
    cons.append(Z == cp.bmat([[np.eye(6), kt], [kt.T, QmD]]))
    for i in range(12):
        for sign, bound, s in ((1.0, gamma, s2), (-1.0, nu, s3)):
            Wi = cp.Variable((m + 1, m + 1), PSD=True)
            g = gram_coeffs(Wi, m)
            for k in range(deg + 1):
                qk = q[i, k] if k <= nq else 0
                const = (-bound if sign > 0 else bound) if k == 0 else 0
                cons.append(sign * qk + const + coef(s, k) == g[k])
    if eps1 is not None:
        cons.append(beta >= eps1)
    prob = cp.Problem(cp.Maximize(beta), cons)
    prob.solve(solver=solver)
    return prob.status, beta.value, q.value, kt.value


def parse_sdpa(text):
    """Read a sparse SDPA file into ``(c, blocks, F)``.

    ``F[k]`` is a list of dense block matrices (diagonal blocks stored as
    1-d arrays) for ``k = 0..m``.
    """
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith(('"', "*"))]
    m = int(lines[0].split()[0])
    nblocks = int(lines[1].split()[0])
    sizes = [int(v) for v in lines[2].replace(",", " ").replace("{", " ").replace("}", " ").split()[:nblocks]]
    c = np.array([float(v) for v in lines[3].replace(",", " ").split()[:m]])
    F = [[np.zeros(abs(s)) if s < 0 else np.zeros((s, s)) for s in sizes] for _ in range(m + 1)]
    for ln in lines[4:]:
        k, b, i, j, v = ln.split()
        k, b, i, j, v = int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)
        if sizes[b] < 0:
            F[k][b][i] += v
        else:
            F[k][b][i, j] += v
            if i != j:
                F[k][b][j, i] += v
    return c, sizes, F


def advect_exact(profile, speed, x, t, length):
    """Method of characteristics for ``u_t + speed u_x = 0`` with zero inflow."""
    xs = x - speed * t
    out = profile(xs)
    out[(xs < 0) | (xs > length)] = 0.0
    return out
