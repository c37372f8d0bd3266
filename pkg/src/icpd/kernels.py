"""Elementwise hot kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``ICPD_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).  Both
paths receive identical precomputed scalars (bias corrections etc.) and do
the same per-element IEEE operations in the same order, so they agree
bit-for-bit.

Every public kernel takes and returns float64 arrays of arbitrary shape;
inputs are never modified unless the name ends in ``_`` (in-place).
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FALSE = {"", "0", "false", "no", "off"}


def numba_requested() -> bool:
    return os.environ.get("ICPD_DISABLE_NUMBA", "").strip().lower() in _FALSE


try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _np_sign_step(x, g, eps):
    return x + eps * np.sign(g)


def _np_adam_icp(x, g, m, v, eps, b1, b2, corr1, corr2, delta):
    m_new = b1 * m + (1.0 - b1) * g
    v_new = b2 * v + (1.0 - b2) * (g * g)
    x_new = x - eps * (m_new * corr2) / (corr1 * (np.sqrt(v_new) + delta))
    return x_new, m_new, v_new


def _np_ademamix_icp(x, g, m1, m2, v, eps, b1, b2, b3, alpha, corr1, corr2, delta):
    m1_new = b1 * m1 + (1.0 - b1) * g
    m2_new = b3 * m2 + (1.0 - b3) * g
    v_new = b2 * v + (1.0 - b2) * (g * g)
    num = (m1_new + alpha * m2_new * corr1) * corr2
    x_new = x - eps * num / (corr1 * (np.sqrt(v_new) + delta))
    return x_new, m1_new, m2_new, v_new


def _np_tanh_grad(y, g):
    return g * (1.0 - y * y)


def _np_relu_grad(x, g):
    return np.where(x > 0.0, g, 0.0)


def _np_sgd_momentum_(p, g, buf, lr, momentum):
    buf *= momentum
    buf += g
    p -= lr * buf


def _np_adam_param_(p, g, m, v, lr, b1, b2, corr1, corr2, eps):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


numpy_kernels = SimpleNamespace(
    sign_step=_np_sign_step,
    adam_icp=_np_adam_icp,
    ademamix_icp=_np_ademamix_icp,
    tanh_grad=_np_tanh_grad,
    relu_grad=_np_relu_grad,
    sgd_momentum_=_np_sgd_momentum_,
    adam_param_=_np_adam_param_,
)


# ---------------------------------------------------------------------------
# numba implementations (flat loops over contiguous buffers)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _nb_sign_step_flat(x, g, eps, out):
        for i in range(x.size):
            gi = g[i]
            if gi > 0.0:
                out[i] = x[i] + eps
            elif gi < 0.0:
                out[i] = x[i] - eps
            else:
                out[i] = x[i] + eps * 0.0

    @njit(cache=True)
    def _nb_adam_icp_flat(x, g, m, v, eps, b1, b2, corr1, corr2, delta, xo, mo, vo):
        for i in range(x.size):
            gi = g[i]
            mi = b1 * m[i] + (1.0 - b1) * gi
            vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
            mo[i] = mi
            vo[i] = vi
            xo[i] = x[i] - eps * (mi * corr2) / (corr1 * (np.sqrt(vi) + delta))

    @njit(cache=True)
    def _nb_ademamix_icp_flat(x, g, m1, m2, v, eps, b1, b2, b3, alpha, corr1, corr2,
                              delta, xo, m1o, m2o, vo):
        for i in range(x.size):
            gi = g[i]
            a = b1 * m1[i] + (1.0 - b1) * gi
            b = b3 * m2[i] + (1.0 - b3) * gi
            vi = b2 * v[i] + (1.0 - b2) * (gi * gi)
            m1o[i] = a
            m2o[i] = b
            vo[i] = vi
            num = (a + alpha * b * corr1) * corr2
            xo[i] = x[i] - eps * num / (corr1 * (np.sqrt(vi) + delta))

    @njit(cache=True)
    def _nb_tanh_grad_flat(y, g, out):
        for i in range(y.size):
            out[i] = g[i] * (1.0 - y[i] * y[i])

    @njit(cache=True)
    def _nb_relu_grad_flat(x, g, out):
        for i in range(x.size):
            out[i] = g[i] if x[i] > 0.0 else 0.0

    @njit(cache=True)
    def _nb_sgd_momentum_flat(p, g, buf, lr, momentum):
        for i in range(p.size):
            b = buf[i] * momentum
            b = b + g[i]
            buf[i] = b
            p[i] = p[i] - lr * b

    @njit(cache=True)
    def _nb_adam_param_flat(p, g, m, v, lr, b1, b2, corr1, corr2, eps):
        for i in range(p.size):
            gi = g[i]
            mi = m[i] * b1
            mi = mi + (1.0 - b1) * gi
            vi = v[i] * b2
            vi = vi + (1.0 - b2) * (gi * gi)
            m[i] = mi
            v[i] = vi
            p[i] = p[i] - lr * (mi / corr1) / (np.sqrt(vi / corr2) + eps)


def _flat(a):
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)


def _nb_sign_step(x, g, eps):
    out = np.empty(x.size)
    _nb_sign_step_flat(_flat(x), _flat(g), float(eps), out)
    return out.reshape(np.shape(x))


def _nb_adam_icp(x, g, m, v, eps, b1, b2, corr1, corr2, delta):
    shape = np.shape(x)
    xo, mo, vo = np.empty(x.size), np.empty(x.size), np.empty(x.size)
    _nb_adam_icp_flat(_flat(x), _flat(g), _flat(m), _flat(v), float(eps), float(b1),
                      float(b2), float(corr1), float(corr2), float(delta), xo, mo, vo)
    return xo.reshape(shape), mo.reshape(shape), vo.reshape(shape)


def _nb_ademamix_icp(x, g, m1, m2, v, eps, b1, b2, b3, alpha, corr1, corr2, delta):
    shape = np.shape(x)
    n = x.size
    xo, m1o, m2o, vo = np.empty(n), np.empty(n), np.empty(n), np.empty(n)
    _nb_ademamix_icp_flat(_flat(x), _flat(g), _flat(m1), _flat(m2), _flat(v), float(eps),
                          float(b1), float(b2), float(b3), float(alpha), float(corr1),
                          float(corr2), float(delta), xo, m1o, m2o, vo)
    return xo.reshape(shape), m1o.reshape(shape), m2o.reshape(shape), vo.reshape(shape)


def _nb_tanh_grad(y, g):
    out = np.empty(y.size)
    _nb_tanh_grad_flat(_flat(y), _flat(g), out)
    return out.reshape(np.shape(y))


def _nb_relu_grad(x, g):
    out = np.empty(x.size)
    _nb_relu_grad_flat(_flat(x), _flat(g), out)
    return out.reshape(np.shape(x))


def _require_inplace(*arrays):
    for a in arrays:
        if not (a.flags.c_contiguous and a.dtype == np.float64):
            raise ValueError("in-place kernels need C-contiguous float64 buffers")


def _nb_sgd_momentum_(p, g, buf, lr, momentum):
    _require_inplace(p, buf)
    _nb_sgd_momentum_flat(p.reshape(-1), _flat(g), buf.reshape(-1), float(lr), float(momentum))


def _nb_adam_param_(p, g, m, v, lr, b1, b2, corr1, corr2, eps):
    _require_inplace(p, m, v)
    _nb_adam_param_flat(p.reshape(-1), _flat(g), m.reshape(-1), v.reshape(-1), float(lr),
                        float(b1), float(b2), float(corr1), float(corr2), float(eps))


numba_kernels = SimpleNamespace(
    sign_step=_nb_sign_step,
    adam_icp=_nb_adam_icp,
    ademamix_icp=_nb_ademamix_icp,
    tanh_grad=_nb_tanh_grad,
    relu_grad=_nb_relu_grad,
    sgd_momentum_=_nb_sgd_momentum_,
    adam_param_=_nb_adam_param_,
) if HAS_NUMBA else None

USE_NUMBA = HAS_NUMBA and numba_requested()
active = numba_kernels if USE_NUMBA else numpy_kernels
BACKEND = "numba" if USE_NUMBA else "numpy"

sign_step = active.sign_step
adam_icp = active.adam_icp
ademamix_icp = active.ademamix_icp
tanh_grad = active.tanh_grad
relu_grad = active.relu_grad
sgd_momentum_ = active.sgd_momentum_
adam_param_ = active.adam_param_
