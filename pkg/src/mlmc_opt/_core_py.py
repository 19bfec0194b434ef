"""Pure-Python/numpy versions of the compiled kernels in ``_core.pyx``.

Same signatures, same randomness layout. Replicates sharing a chain
length are advanced together, which keeps this path usable when the
extension is not built.
"""

import numpy as np


def _offsets(counts):
    starts = np.zeros(len(counts), dtype=np.int64)
    if len(counts) > 1:
        np.cumsum(counts[:-1], out=starts[1:])
    return starts


def ar1_mlmc_batch(length, half, weight, x0, rho, scale, clip, normals):
    length = np.asarray(length, dtype=np.int64)
    half = np.asarray(half, dtype=np.int64)
    weight = np.asarray(weight, dtype=float)
    normals = np.asarray(normals, dtype=float)
    starts = _offsets(length - 1)
    out = np.empty(len(length))
    for L in np.unique(length):
        idx = np.nonzero(length == L)[0]
        x = np.full(len(idx), float(x0))
        h1 = np.clip(x, -clip, clip)
        s_all = h1.copy()
        s_half = h1.copy()
        lh = half[idx]
        for i in range(1, L):
            x = rho * x + scale * normals[starts[idx] + i - 1]
            h = np.clip(x, -clip, clip)
            s_all += h
            s_half += np.where(i < lh, h, 0.0)
        w = weight[idx]
        corr = np.where(w != 0.0, w * (s_all / L - s_half / lh), 0.0)
        out[idx] = h1 + corr
    return out


def rwmh_gauss_chain(x0, mean, inv_var, sigma_p, z, log_u):
    x = np.array(x0, dtype=float)
    mean = np.asarray(mean, dtype=float)
    z = np.asarray(z, dtype=float)
    steps = z.shape[0]
    states = np.empty((steps + 1, x.size))
    states[0] = x
    diff = x - mean
    lp = -0.5 * float(np.dot(diff, diff)) * inv_var
    accepts = 0
    for i in range(steps):
        prop = states[i] + sigma_p * z[i]
        diff = prop - mean
        lp_new = -0.5 * float(np.dot(diff, diff)) * inv_var
        if log_u[i] < lp_new - lp:
            states[i + 1] = prop
            lp = lp_new
            accepts += 1
        else:
            states[i + 1] = states[i]
    return states, accepts


def isir_lg_batch(length, half, weight, theta, y, k, q_loc, q_scale, z0, u_slot, normals, u_sel):
    length = np.asarray(length, dtype=np.int64)
    half = np.asarray(half, dtype=np.int64)
    weight = np.asarray(weight, dtype=float)
    normals = np.asarray(normals, dtype=float)
    u_slot = np.asarray(u_slot, dtype=float)
    u_sel = np.asarray(u_sel, dtype=float)
    step_start = _offsets(length)
    out = np.empty(len(length))
    last = np.empty(len(length))
    inv_q2 = 1.0 / (q_scale * q_scale)
    cols = np.arange(k)
    for L in np.unique(length):
        idx = np.nonzero(length == L)[0]
        m = len(idx)
        zt = np.asarray(z0, dtype=float)[idx].copy()
        s_all = np.zeros(m)
        s_half = np.zeros(m)
        g1 = np.zeros(m)
        lh = half[idx]
        rows = np.arange(m)
        for p in range(L):
            s = step_start[idx] + p
            J = np.minimum(np.floor(u_slot[s] * k).astype(np.int64), k - 1)
            # fresh draws fill slots in order, skipping the planted slot
            if k > 1:
                fresh = normals[(s * (k - 1))[:, None] + np.arange(k - 1)]
                slot = np.minimum(cols[None, :] - (cols[None, :] > J[:, None]), k - 2)
                zb = q_loc + q_scale * np.take_along_axis(fresh, slot, axis=1)
            else:
                zb = np.empty((m, 1))
            zb[rows, J] = zt
            res = y - theta - zb
            lw = -0.5 * zb * zb - 0.5 * res * res + 0.5 * (zb - q_loc) ** 2 * inv_q2
            w = np.exp(lw - lw.max(axis=1, keepdims=True))
            tot = w.sum(axis=1)
            g = ((w / tot[:, None]) * res).sum(axis=1)
            cum = np.cumsum(w, axis=1)
            pick = (cum <= (u_sel[s] * tot)[:, None]).sum(axis=1)
            zt = zb[rows, np.minimum(pick, k - 1)]
            if p == 0:
                g1 = g
            s_all += g
            s_half += np.where(p < lh, g, 0.0)
        w = weight[idx]
        out[idx] = g1 + np.where(w != 0.0, w * (s_all / L - s_half / lh), 0.0)
        last[idx] = zt
    return out, last
