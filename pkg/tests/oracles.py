"""Reference implementations written independently of the package internals.

They deliberately avoid the per-mode machinery: everything is assembled
node by node in physical (r, theta, z) space with explicit loops and solved
densely.
"""
import numpy as np


def radial_layout(n_r):
    dr = 1.0 / (n_r - 0.5)
    r = (np.arange(n_r) + 0.5) * dr
    faces = np.arange(1, n_r) * dr
    edges = np.concatenate([[0.0], faces, [1.0]])
    vol = 0.5 * (edges[1:] ** 2 - edges[:-1] ** 2)
    return dr, r, faces, vol


def theta_second_derivative(n):
    """Dense spectral d^2/dtheta^2 on n equispaced points (Nyquist mode kept real)."""
    th = 2 * np.pi * np.arange(n) / n
    D = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            s = 0.0
            for m in range(n // 2 + 1):
                w = 1.0 if m == 0 or 2 * m == n else 2.0
                s += -w * m * m * np.cos(m * (th[a] - th[b]))
            D[a, b] = s / n
    return D


def dense_mixed_solve(n_r, n_theta, n_z, h, lam, f, gb, gt, j):
    """Finite-volume flux balance for ``div(A grad psi) = f`` with the lateral flux datum.

    Wall unknowns carry only the circle average (one value per z), the
    rest of the wall trace is zero, and a Lagrange multiplier pins the
    volume mean to zero.  Returns psi on the (r, theta, z) nodes.
    """
    dr, r, rf, vr = radial_layout(n_r)
    dz = h / (n_z - 1)
    wz = np.full(n_z, dz)
    wz[0] = wz[-1] = dz / 2
    zf = (np.arange(n_z - 1) + 0.5) * dz
    fc = lam(zf) / dz
    D = theta_second_derivative(n_theta)

    n_in = n_r - 1
    idx = {}
    for i in range(n_in):
        for l in range(n_theta):
            for k in range(n_z):
                idx[(i, l, k)] = len(idx)
    wall = {k: len(idx) + k for k in range(n_z)}
    mu = len(idx) + n_z
    N = mu + 1
    A = np.zeros((N, N))
    b = np.zeros(N)

    def col(i, l, k):
        return wall[k] if i == n_r - 1 else idx[(i, l, k)]

    # interior rows, scaled per unit angle
    for i in range(n_in):
        for l in range(n_theta):
            for k in range(n_z):
                row = idx[(i, l, k)]
                if i > 0:
                    c = rf[i - 1] / dr * wz[k]
                    A[row, row] += c
                    A[row, col(i - 1, l, k)] -= c
                c = rf[i] / dr * wz[k]
                A[row, row] += c
                A[row, col(i + 1, l, k)] -= c
                for q in range(n_theta):
                    A[row, idx[(i, q, k)]] -= vr[i] / r[i] ** 2 * wz[k] * D[l, q]
                for kk in (k - 1, k + 1):
                    if 0 <= kk < n_z:
                        c = vr[i] * fc[min(k, kk)]
                        A[row, row] += c
                        A[row, idx[(i, l, kk)]] -= c
                b[row] = -vr[i] * wz[k] * f[i, l, k]
                if k == 0:
                    b[row] += vr[i] * lam(0.0) * gb[i, l]
                if k == n_z - 1:
                    b[row] += vr[i] * lam(h) * gt[i, l]
                A[row, mu] += vr[i] * wz[k]

    # wall rows: theta average of the wall control volumes
    i = n_r - 1
    for k in range(n_z):
        row = wall[k]
        c = rf[i - 1] / dr * wz[k]
        A[row, row] += c
        for l in range(n_theta):
            A[row, idx[(i - 1, l, k)]] -= c / n_theta
        for kk in (k - 1, k + 1):
            if 0 <= kk < n_z:
                c = vr[i] * fc[min(k, kk)]
                A[row, row] += c
                A[row, wall[kk]] -= c
        b[row] = -vr[i] * wz[k] * np.mean(f[i, :, k]) + wz[k] * j[k]
        if k == 0:
            b[row] += vr[i] * lam(0.0) * np.mean(gb[i])
        if k == n_z - 1:
            b[row] += vr[i] * lam(h) * np.mean(gt[i])
        A[row, mu] += vr[i] * wz[k]

    # zero-mean constraint
    for (i, l, k), c in idx.items():
        A[mu, c] += vr[i] * wz[k] / n_theta
    for k in range(n_z):
        A[mu, wall[k]] += vr[n_r - 1] * wz[k]

    x = np.linalg.solve(A, b)
    psi = np.zeros((n_r, n_theta, n_z))
    for (i, l, k), c in idx.items():
        psi[i, l, k] = x[c]
    for k in range(n_z):
        psi[n_r - 1, :, k] = x[wall[k]]
    return psi
