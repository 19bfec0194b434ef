# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for chain simulation and the telescoping estimate.

Every kernel takes its randomness as pre-drawn arrays so that results do
not depend on which backend runs them. Layout conventions are shared with
``_core_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, floor

cnp.import_array()


cdef inline double _clip(double v, double c) noexcept nogil:
    if v > c:
        return c
    if v < -c:
        return -c
    return v


def ar1_mlmc_batch(const cnp.int64_t[:] length, const cnp.int64_t[:] half,
                   const double[:] weight, double x0, double rho, double scale,
                   double clip, const double[:] normals):
    """MLMC estimates on scalar AR(1) chains ``x' = rho x + scale xi``.

    Replicate ``r`` consumes ``length[r] - 1`` consecutive normals.
    """
    cdef Py_ssize_t n = length.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(n)
    cdef double[:] out = out_arr
    cdef Py_ssize_t r, i, pos = 0
    cdef Py_ssize_t L, Lh
    cdef double x, h, h1, s_all, s_half
    with nogil:
        for r in range(n):
            L = length[r]
            Lh = half[r]
            x = x0
            h1 = _clip(x, clip)
            s_all = h1
            s_half = h1
            for i in range(1, L):
                x = rho * x + scale * normals[pos]
                pos += 1
                h = _clip(x, clip)
                s_all += h
                if i < Lh:
                    s_half += h
            if weight[r] != 0.0:
                out[r] = h1 + weight[r] * (s_all / L - s_half / Lh)
            else:
                out[r] = h1
    return out_arr


def rwmh_gauss_chain(const double[:] x0, const double[:] mean, double inv_var,
                     double sigma_p, const double[:, :] z, const double[:] log_u):
    """Random-walk Metropolis chain on an isotropic Gaussian target.

    ``z`` holds one standard-normal proposal increment per transition and
    ``log_u`` the log-uniforms compared with the log acceptance ratio.
    Returns ``(states, accept_count)`` with ``len(z) + 1`` states.
    """
    cdef Py_ssize_t steps = z.shape[0]
    cdef Py_ssize_t q = x0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] states_arr = np.empty((steps + 1, q))
    cdef double[:, :] states = states_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] prop_arr = np.empty(q)
    cdef double[:] prop = prop_arr
    cdef Py_ssize_t i, j
    cdef long accepts = 0
    cdef double lp, lp_new, diff
    with nogil:
        lp = 0.0
        for j in range(q):
            states[0, j] = x0[j]
            diff = x0[j] - mean[j]
            lp -= 0.5 * diff * diff * inv_var
        for i in range(steps):
            lp_new = 0.0
            for j in range(q):
                prop[j] = states[i, j] + sigma_p * z[i, j]
                diff = prop[j] - mean[j]
                lp_new -= 0.5 * diff * diff * inv_var
            if log_u[i] < lp_new - lp:
                for j in range(q):
                    states[i + 1, j] = prop[j]
                lp = lp_new
                accepts += 1
            else:
                for j in range(q):
                    states[i + 1, j] = states[i, j]
    return states_arr, accepts


def isir_lg_batch(const cnp.int64_t[:] length, const cnp.int64_t[:] half,
                  const double[:] weight, double theta, double y, Py_ssize_t k,
                  double q_loc, double q_scale, const double[:] z0,
                  const double[:] u_slot, const double[:] normals,
                  const double[:] u_sel):
    """Iterated sampling-importance-resampling on the linear-Gaussian model.

    Model ``z ~ N(0, 1)``, ``y | z ~ N(theta + z, 1)``, proposal
    ``N(q_loc, q_scale^2)``. Each step plants the current latent at slot
    ``floor(u_slot * k)``, fills the other ``k - 1`` slots from the
    proposal, forms the self-normalized gradient term and resamples.
    Returns the MLMC estimates and the final latent state per replicate.
    """
    cdef Py_ssize_t n = length.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] last_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zbuf_arr = np.empty(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wbuf_arr = np.empty(k)
    cdef double[:] out = out_arr
    cdef double[:] last = last_arr
    cdef double[:] zb = zbuf_arr
    cdef double[:] wb = wbuf_arr
    cdef Py_ssize_t r, p, l, J, pos_n = 0, pos_s = 0
    cdef Py_ssize_t L, Lh
    cdef double zt, lw, lw_max, tot, g, g1, s_all, s_half, target, acc, r_res
    cdef double inv_q2 = 1.0 / (q_scale * q_scale)
    with nogil:
        for r in range(n):
            L = length[r]
            Lh = half[r]
            zt = z0[r]
            s_all = 0.0
            s_half = 0.0
            g1 = 0.0
            for p in range(L):
                J = <Py_ssize_t>floor(u_slot[pos_s] * k)
                if J >= k:
                    J = k - 1
                for l in range(k):
                    if l == J:
                        zb[l] = zt
                    else:
                        zb[l] = q_loc + q_scale * normals[pos_n]
                        pos_n += 1
                lw_max = -1e308
                for l in range(k):
                    r_res = y - theta - zb[l]
                    lw = (-0.5 * zb[l] * zb[l] - 0.5 * r_res * r_res
                          + 0.5 * (zb[l] - q_loc) * (zb[l] - q_loc) * inv_q2)
                    wb[l] = lw
                    if lw > lw_max:
                        lw_max = lw
                tot = 0.0
                for l in range(k):
                    wb[l] = exp(wb[l] - lw_max)
                    tot += wb[l]
                g = 0.0
                for l in range(k):
                    g += (wb[l] / tot) * (y - theta - zb[l])
                target = u_sel[pos_s] * tot
                acc = 0.0
                zt = zb[k - 1]
                for l in range(k):
                    acc += wb[l]
                    if target < acc:
                        zt = zb[l]
                        break
                pos_s += 1
                if p == 0:
                    g1 = g
                s_all += g
                if p < Lh:
                    s_half += g
            last[r] = zt
            if weight[r] != 0.0:
                out[r] = g1 + weight[r] * (s_all / L - s_half / Lh)
            else:
                out[r] = g1
    return out_arr, last_arr
