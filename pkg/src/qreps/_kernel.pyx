# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner saddle-point loop; see ``_kernel_py`` for the reference semantics."""

import numpy as np

from libc.math cimport exp, log, sqrt, INFINITY
from libc.stdint cimport int64_t

cdef enum:
    SGD = 0
    ADAM = 1
    EG = 0
    BR = 1
    SAMPLED = 0
    EXACT = 1


cdef inline Py_ssize_t _pick(double u, const double[:] probs) noexcept nogil:
    cdef Py_ssize_t i, n = probs.shape[0]
    cdef double total = 0.0, acc = 0.0, target
    for i in range(n):
        total += probs[i]
    target = u * total
    for i in range(n):
        acc += probs[i]
        if target < acc:
            return i
    return n - 1


cdef inline double _dot(const double[::1] theta, const int64_t[:] idx, const double[:] val) noexcept nogil:
    cdef Py_ssize_t j
    cdef double s = 0.0
    for j in range(idx.shape[0]):
        s += theta[idx[j]] * val[j]
    return s


cdef inline void _axpy(double[::1] g, double c, const int64_t[:] idx, const double[:] val) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(idx.shape[0]):
        g[idx[j]] += c * val[j]


cdef double _soft_value(const double[::1] theta, const int64_t[:, :] idx, const double[:, :] val,
                        const double[:] logprior, double alpha, double[:] logits_out,
                        double[:] policy_out) noexcept nogil:
    """Soft value of one state; writes the soft policy into ``policy_out``."""
    cdef Py_ssize_t a, n_act = logprior.shape[0]
    cdef double top = -INFINITY, s = 0.0, lse
    for a in range(n_act):
        logits_out[a] = logprior[a] + alpha * _dot(theta, idx[a], val[a])
        if logits_out[a] > top:
            top = logits_out[a]
    for a in range(n_act):
        s += exp(logits_out[a] - top)
    lse = top + log(s)
    for a in range(n_act):
        policy_out[a] = exp(logits_out[a] - lse)
    return lse / alpha


def run_inner(pb, theta0, int steps, double beta, double beta_prime, int learner, int sampler,
              int grad_mode, uniforms_arr, double b1, double b2, double eps):
    cdef const double[::1] rewards = pb.rewards
    cdef const int64_t[:, ::1] sa_idx = pb.sa_idx
    cdef const double[:, ::1] sa_val = pb.sa_val
    cdef const double[:, ::1] next_prob = pb.next_prob
    cdef const int64_t[:, :, :, ::1] next_idx = pb.next_idx
    cdef const double[:, :, :, ::1] next_val = pb.next_val
    cdef const double[:, :, ::1] next_logprior = pb.next_logprior
    cdef const double[::1] init_weight = pb.init_weight
    cdef const int64_t[:, :, ::1] init_idx = pb.init_idx
    cdef const double[:, :, ::1] init_val = pb.init_val
    cdef const double[:, ::1] init_logprior = pb.init_logprior
    cdef const double[:, ::1] uniforms = uniforms_arr
    cdef double gamma = pb.gamma, eta = pb.eta, alpha = pb.alpha

    cdef Py_ssize_t N = rewards.shape[0], J = next_prob.shape[1], A = next_logprior.shape[2]
    cdef Py_ssize_t M = init_weight.shape[0], dim = pb.dim
    cdef Py_ssize_t t, n, j, a, i, s_idx, a_idx
    cdef bint use_init = gamma < 1.0 and M > 0

    theta_arr = np.array(theta0, dtype=np.float64)
    total_arr = theta_arr.copy()
    cdef double[::1] theta = theta_arr
    cdef double[::1] total = total_arr
    cdef double[::1] g = np.zeros(dim)
    cdef double[::1] m1 = np.zeros(dim)
    cdef double[::1] m2 = np.zeros(dim)
    cdef double[::1] deltas = np.zeros(N)
    cdef double[::1] logz = np.full(N, -log(<double>N))
    cdef double[::1] z = np.zeros(N)
    cdef double[:, :, ::1] pi_next = np.zeros((N, J, A))
    cdef double[:, ::1] pi_init = np.zeros((max(M, 1), A))
    cdef double[::1] logits = np.zeros(A)
    trace_arr = np.zeros((steps, 3))
    cdef double[:, ::1] trace = trace_arr

    cdef double log_n = log(<double>N), nu_term, vsum, v, top, acc, lse, s_val, gsq, c1, c2, mh, vh, h
    cdef double bp1 = 1.0, bp2 = 1.0

    with nogil:
        for t in range(steps):
            # Bellman errors and soft policies at theta_t
            for n in range(N):
                vsum = 0.0
                for j in range(J):
                    if next_prob[n, j] == 0.0:
                        for a in range(A):
                            pi_next[n, j, a] = 0.0
                        continue
                    v = _soft_value(theta, next_idx[n, j], next_val[n, j], next_logprior[n, j],
                                    alpha, logits, pi_next[n, j])
                    vsum += next_prob[n, j] * v
                deltas[n] = rewards[n] + gamma * vsum - _dot(theta, sa_idx[n], sa_val[n])
            nu_term = 0.0
            if use_init:
                for i in range(M):
                    v = _soft_value(theta, init_idx[i], init_val[i], init_logprior[i], alpha, logits, pi_init[i])
                    nu_term += init_weight[i] * v
                nu_term *= 1.0 - gamma

            top = -INFINITY
            for n in range(N):
                if eta * deltas[n] > top:
                    top = eta * deltas[n]
            acc = 0.0
            for n in range(N):
                acc += exp(eta * deltas[n] - top)
            lse = top + log(acc)
            if sampler == BR:
                for n in range(N):
                    logz[n] = eta * deltas[n] - lse
            s_val = 0.0
            for n in range(N):
                z[n] = exp(logz[n])
                s_val += z[n] * deltas[n] - z[n] * (log_n + logz[n]) / eta
            trace[t, 0] = (lse - log_n) / eta + nu_term
            trace[t, 1] = s_val + nu_term

            # learner gradient
            for i in range(dim):
                g[i] = 0.0
            if grad_mode == EXACT:
                for n in range(N):
                    for j in range(J):
                        if next_prob[n, j] == 0.0:
                            continue
                        for a in range(A):
                            c1 = gamma * z[n] * next_prob[n, j] * pi_next[n, j, a]
                            if c1 != 0.0:
                                _axpy(g, c1, next_idx[n, j, a], next_val[n, j, a])
                    _axpy(g, -z[n], sa_idx[n], sa_val[n])
                if use_init:
                    for i in range(M):
                        for a in range(A):
                            _axpy(g, (1.0 - gamma) * init_weight[i] * pi_init[i, a], init_idx[i, a], init_val[i, a])
            else:
                n = _pick(uniforms[t, 0], z)
                j = _pick(uniforms[t, 1], next_prob[n])
                a = _pick(uniforms[t, 2], pi_next[n, j])
                _axpy(g, gamma, next_idx[n, j, a], next_val[n, j, a])
                _axpy(g, -1.0, sa_idx[n], sa_val[n])
                if use_init:
                    s_idx = _pick(uniforms[t, 3], init_weight)
                    a_idx = _pick(uniforms[t, 4], pi_init[s_idx])
                    _axpy(g, 1.0 - gamma, init_idx[s_idx, a_idx], init_val[s_idx, a_idx])
            gsq = 0.0
            for i in range(dim):
                gsq += g[i] * g[i]
            trace[t, 2] = sqrt(gsq)

            # sampler step
            if sampler == EG:
                top = -INFINITY
                for n in range(N):
                    h = deltas[n] - (log_n + logz[n]) / eta
                    logz[n] = logz[n] + beta_prime * h
                    if logz[n] > top:
                        top = logz[n]
                acc = 0.0
                for n in range(N):
                    acc += exp(logz[n] - top)
                lse = top + log(acc)
                for n in range(N):
                    logz[n] -= lse

            # learner step
            if learner == ADAM:
                bp1 *= b1
                bp2 *= b2
                for i in range(dim):
                    m1[i] = b1 * m1[i] + (1.0 - b1) * g[i]
                    m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i]
                    mh = m1[i] / (1.0 - bp1)
                    vh = m2[i] / (1.0 - bp2)
                    theta[i] -= beta * mh / (sqrt(vh) + eps)
            else:
                for i in range(dim):
                    theta[i] -= beta * g[i]
            for i in range(dim):
                total[i] += theta[i]

    z_out = np.exp(np.asarray(logz))
    return total_arr / (steps + 1), theta_arr, z_out, trace_arr
