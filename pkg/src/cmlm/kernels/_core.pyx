# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: same contracts as cmlm.kernels.pure, C loops inside."""

import numpy as np
from libc.math cimport exp, log, sqrt, erf, INFINITY

NAME = "compiled"

cdef double SQRT1_2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def softmax_xent_fwbw(logits_in, targets_in, weights_in):
    arr = np.ascontiguousarray(logits_in, dtype=np.float64)
    cdef double[:, ::1] logits = arr
    cdef long long[::1] targets = np.ascontiguousarray(targets_in, dtype=np.int64)
    cdef double[::1] weights = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef Py_ssize_t t = logits.shape[0], v = logits.shape[1]
    out = np.zeros((t, v), dtype=np.float64)
    cdef double[:, ::1] dlogits = out
    cdef Py_ssize_t i, j
    cdef double mx, z, w, p, loss = 0.0
    for i in range(t):
        w = weights[i]
        mx = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(v):
            z += exp(logits[i, j] - mx)
        loss -= w * (logits[i, targets[i]] - mx - log(z))
        if w != 0.0:
            for j in range(v):
                p = exp(logits[i, j] - mx) / z
                dlogits[i, j] = w * p
            dlogits[i, targets[i]] -= w
    return loss, out


def layernorm_fw(x_in, gain_in, bias_in, double eps=1e-5):
    arr = np.ascontiguousarray(x_in, dtype=np.float64)
    shape = arr.shape
    cdef Py_ssize_t d = shape[len(shape) - 1]
    cdef double[:, ::1] x = arr.reshape(-1, d)
    cdef double[::1] gain = np.ascontiguousarray(gain_in, dtype=np.float64)
    cdef double[::1] bias = np.ascontiguousarray(bias_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    y_out = np.empty((n, d), dtype=np.float64)
    mean_out = np.empty(n, dtype=np.float64)
    rstd_out = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_out
    cdef double[::1] mean = mean_out
    cdef double[::1] rstd = rstd_out
    cdef Py_ssize_t i, j
    cdef double mu, var, dev
    for i in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[i, j]
        mu /= d
        var = 0.0
        for j in range(d):
            dev = x[i, j] - mu
            var += dev * dev
        var /= d
        mean[i] = mu
        rstd[i] = 1.0 / sqrt(var + eps)
        for j in range(d):
            y[i, j] = (x[i, j] - mu) * rstd[i] * gain[j] + bias[j]
    return (y_out.reshape(shape), mean_out.reshape(shape[:-1]),
            rstd_out.reshape(shape[:-1]))


def layernorm_bw(dy_in, x_in, gain_in, mean_in, rstd_in):
    x_arr = np.ascontiguousarray(x_in, dtype=np.float64)
    shape = x_arr.shape
    cdef Py_ssize_t d = shape[len(shape) - 1]
    cdef double[:, ::1] x = x_arr.reshape(-1, d)
    cdef double[:, ::1] dy = np.ascontiguousarray(dy_in, dtype=np.float64).reshape(-1, d)
    cdef double[::1] gain = np.ascontiguousarray(gain_in, dtype=np.float64)
    cdef double[::1] mean = np.ascontiguousarray(mean_in, dtype=np.float64).reshape(-1)
    cdef double[::1] rstd = np.ascontiguousarray(rstd_in, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = x.shape[0]
    dx_out = np.empty((n, d), dtype=np.float64)
    dgain_out = np.zeros(d, dtype=np.float64)
    dbias_out = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_out
    cdef double[::1] dgain = dgain_out
    cdef double[::1] dbias = dbias_out
    cdef Py_ssize_t i, j
    cdef double xhat, dxhat, m1, m2
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            dgain[j] += dy[i, j] * xhat
            dbias[j] += dy[i, j]
            m1 += dxhat
            m2 += dxhat * xhat
        m1 /= d
        m2 /= d
        for j in range(d):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            dxhat = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (dxhat - m1 - xhat * m2)
    return dx_out.reshape(shape), dgain_out, dbias_out


def gelu_fw(x_in):
    arr = np.ascontiguousarray(x_in, dtype=np.float64)
    shape = arr.shape
    cdef double[::1] x = arr.reshape(-1)
    y_out = np.empty(x.shape[0], dtype=np.float64)
    cdef double[::1] y = y_out
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        y[i] = 0.5 * x[i] * (1.0 + erf(x[i] * SQRT1_2))
    return y_out.reshape(shape)


def gelu_bw(x_in, dy_in):
    arr = np.ascontiguousarray(x_in, dtype=np.float64)
    shape = arr.shape
    cdef double[::1] x = arr.reshape(-1)
    cdef double[::1] dy = np.ascontiguousarray(dy_in, dtype=np.float64).reshape(-1)
    dx_out = np.empty(x.shape[0], dtype=np.float64)
    cdef double[::1] dx = dx_out
    cdef Py_ssize_t i
    cdef double cdf, pdf
    for i in range(x.shape[0]):
        cdf = 0.5 * (1.0 + erf(x[i] * SQRT1_2))
        pdf = exp(-0.5 * x[i] * x[i]) * INV_SQRT_2PI
        dx[i] = dy[i] * (cdf + x[i] * pdf)
    return dx_out.reshape(shape)


def causal_softmax_fw(scores_in):
    arr = np.ascontiguousarray(scores_in, dtype=np.float64)
    shape = arr.shape
    cdef Py_ssize_t t = shape[len(shape) - 1]
    cdef double[:, :, ::1] s = arr.reshape(-1, t, t)
    cdef Py_ssize_t b = s.shape[0]
    out = np.zeros((b, t, t), dtype=np.float64)
    cdef double[:, :, ::1] p = out
    cdef Py_ssize_t h, i, j
    cdef double mx, z
    for h in range(b):
        for i in range(t):
            mx = -INFINITY
            for j in range(i + 1):
                if s[h, i, j] > mx:
                    mx = s[h, i, j]
            z = 0.0
            for j in range(i + 1):
                z += exp(s[h, i, j] - mx)
            for j in range(i + 1):
                p[h, i, j] = exp(s[h, i, j] - mx) / z
    return out.reshape(shape)


def causal_softmax_bw(probs_in, dprobs_in):
    arr = np.ascontiguousarray(probs_in, dtype=np.float64)
    shape = arr.shape
    cdef Py_ssize_t t = shape[len(shape) - 1]
    cdef double[:, :, ::1] p = arr.reshape(-1, t, t)
    cdef double[:, :, ::1] dp = np.ascontiguousarray(
        dprobs_in, dtype=np.float64).reshape(-1, t, t)
    cdef Py_ssize_t b = p.shape[0]
    out = np.zeros((b, t, t), dtype=np.float64)
    cdef double[:, :, ::1] ds = out
    cdef Py_ssize_t h, i, j
    cdef double inner
    for h in range(b):
        for i in range(t):
            inner = 0.0
            for j in range(i + 1):
                inner += dp[h, i, j] * p[h, i, j]
            for j in range(i + 1):
                ds[h, i, j] = p[h, i, j] * (dp[h, i, j] - inner)
    return out.reshape(shape)


def adam_step(param_in, grad_in, m_in, v_in, double lr, double beta1,
              double beta2, double eps, long long t):
    # param, m and v must be contiguous float64: updates happen in place.
    cdef double[::1] param = param_in.reshape(-1)
    cdef double[::1] grad = np.ascontiguousarray(grad_in, dtype=np.float64).reshape(-1)
    cdef double[::1] m = m_in.reshape(-1)
    cdef double[::1] v = v_in.reshape(-1)
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    for i in range(param.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i]
        param[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
