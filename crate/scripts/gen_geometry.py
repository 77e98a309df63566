"""Generate the geometry fixtures shipped in crates/core/data.

lebedev50.geom       50-node Lebedev rule (exact to degree 11).
tdesign_order6.geom  48-point spherical 6-design found by least squares.
em32.geom            32-capsule rigid-sphere layout (published capsule angles),
                     weights fitted by least squares for order-4 orthonormality.
"""
import numpy as np
from scipy.optimize import least_squares
from scipy.special import lpmv, factorial

FOUR_PI = 4.0 * np.pi


def real_sh(n, m, theta, phi):
    am = abs(m)
    norm = np.sqrt((2 * n + 1) * factorial(n - am) / (FOUR_PI * factorial(n + am)))
    # scipy includes the Condon-Shortley phase; remove it.
    p = lpmv(am, n, np.cos(theta)) * (-1.0) ** am
    if m < 0:
        return norm * p * np.sqrt(2) * np.sin(am * phi)
    if m == 0:
        return norm * p
    return norm * p * np.sqrt(2) * np.cos(am * phi)


def sh_matrix(order, theta, phi):
    cols = []
    for n in range(order + 1):
        for m in range(-n, n + 1):
            cols.append(real_sh(n, m, theta, phi))
    return np.stack(cols, axis=1)


def to_angles(xyz):
    xyz = xyz / np.linalg.norm(xyz, axis=1, keepdims=True)
    theta = np.arccos(np.clip(xyz[:, 2], -1, 1))
    phi = np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), 2 * np.pi)
    return theta, phi


def write(path, role, radius, degree, theta, phi, w, comment):
    with open(path, "w") as f:
        f.write(f"# {comment}\n")
        f.write(f'role = "{role}"\n')
        f.write(f"radius_m = {radius!r}\n")
        if degree is not None:
            f.write(f"exact_degree = {degree}\n")
        f.write("elements = [\n")
        for t, p, ww in zip(theta, phi, w):
            f.write(f"  [{float(t)!r}, {float(p)!r}, {float(ww)!r}],\n")
        f.write("]\n")


def orth_err(order, theta, phi, w):
    Y = sh_matrix(order, theta, phi)
    G = (Y * w[:, None]).T @ Y
    return np.abs(G - np.eye(G.shape[0])).max()


def lebedev50():
    pts, wts = [], []
    a1, a2, a3, b1 = 4 / 315, 64 / 2835, 27 / 1280, 14641 / 725760
    for i in range(3):
        for s in (1, -1):
            v = np.zeros(3)
            v[i] = s
            pts.append(v)
            wts.append(a1)
    for i in range(3):
        for s1 in (1, -1):
            for s2 in (1, -1):
                v = np.zeros(3)
                v[(i + 1) % 3] = s1 / np.sqrt(2)
                v[(i + 2) % 3] = s2 / np.sqrt(2)
                pts.append(v)
                wts.append(a2)
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                pts.append(np.array([sx, sy, sz]) / np.sqrt(3))
                wts.append(a3)
    l, m = 1 / np.sqrt(11), 3 / np.sqrt(11)
    for big in range(3):
        for s0 in (1, -1):
            for s1 in (1, -1):
                for s2 in (1, -1):
                    v = np.full(3, l)
                    v[big] = m
                    pts.append(v * np.array([s0, s1, s2]))
                    wts.append(b1)
    theta, phi = to_angles(np.array(pts))
    w = np.array(wts) * FOUR_PI
    print("lebedev50 orth err order5:", orth_err(5, theta, phi, w))
    return theta, phi, w


def tdesign6(npts=48, seed=3):
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((npts, 3))
    x0 /= np.linalg.norm(x0, axis=1, keepdims=True)

    def resid(flat):
        theta, phi = to_angles(flat.reshape(-1, 3))
        Y = sh_matrix(6, theta, phi)[:, 1:]
        return Y.sum(axis=0)

    best = None
    for _ in range(20):
        sol = least_squares(resid, x0.ravel(), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
        r = np.abs(resid(sol.x)).max()
        if best is None or r < best[0]:
            best = (r, sol.x)
        if r < 1e-14:
            break
        x0 = rng.standard_normal((npts, 3))
    theta, phi = to_angles(best[1].reshape(-1, 3))
    w = np.full(npts, FOUR_PI / npts)
    print("tdesign6 residual", best[0], "orth err order3:", orth_err(3, theta, phi, w))
    return theta, phi, w


EM32_DEG = [
    (69, 0), (90, 32), (111, 0), (90, 328), (32, 0), (55, 45), (90, 69), (125, 45),
    (148, 0), (125, 315), (90, 291), (55, 315), (21, 91), (58, 90), (121, 90), (159, 89),
    (69, 180), (90, 212), (111, 180), (90, 148), (32, 180), (55, 225), (90, 249), (125, 225),
    (148, 180), (125, 135), (90, 111), (55, 135), (21, 269), (58, 270), (122, 270), (159, 271),
]


def em32():
    theta = np.radians([t for t, _ in EM32_DEG])
    phi = np.radians([p for _, p in EM32_DEG])
    Y = sh_matrix(4, theta, phi)
    # Least-squares weights: Y^T diag(w) Y ~ I.
    k = Y.shape[1]
    A = np.stack([np.outer(Y[q], Y[q]).ravel() for q in range(len(theta))], axis=1)
    b = np.eye(k).ravel()
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    w *= FOUR_PI / w.sum()
    print("em32 orth err order4:", orth_err(4, theta, phi, w), "min w", w.min())
    return theta, phi, w


if __name__ == "__main__":
    import os
    out = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")
    t, p, w = lebedev50()
    write(os.path.join(out, "lebedev50.geom"), "loudspeaker-array", 1.5, 11, t, p, w,
          "50-node Lebedev grid, exact to degree 11")
    t, p, w = tdesign6()
    write(os.path.join(out, "tdesign_order6.geom"), "capsule-array", 0.042, 6, t, p, w,
          "48-point spherical 6-design (equal weights)")
    t, p, w = em32()
    write(os.path.join(out, "em32.geom"), "capsule-array", 0.042, None, t, p, w,
          "32-capsule rigid sphere, published capsule angles, least-squares weights")
