"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Each kernel comes in two flavours: a scalar-loop implementation that numba
compiles (``*_loop``) and a numpy implementation (``*_np``). For the
sequential kernels the public name points at the compiled loop when numba is
active and at the numpy version otherwise; see :mod:`pgff._accel` for the
switch. The plant integrator is
inherently sequential, so its fallback is the same loop run by the
interpreter.
"""
import numpy as np

from ._accel import HAS_NUMBA, njit

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2

# max over x of x / cosh(x), attained near x = 1.1997
_XSECH_MAX = 0.6627434193491816


# ---------------------------------------------------------------------------
# backward differences
# ---------------------------------------------------------------------------


def backward_difference_loop(x, fs, x0):
    n = x.shape[0]
    out = np.empty(n)
    prev = x0
    for k in range(n):
        out[k] = fs * (x[k] - prev)
        prev = x[k]
    return out


def backward_difference_np(x, fs, x0):
    out = np.empty(x.shape[0])
    out[0] = fs * (x[0] - x0)
    out[1:] = fs * (x[1:] - x[:-1])
    return out


# ---------------------------------------------------------------------------
# Stribeck mass-damper integrator
# ---------------------------------------------------------------------------


def simulate_stribeck_loop(f, m, c1, c2, alpha, fs, tol, max_iter):
    """Integrate m*y'' + c1*y' + g(y') = f with backward differences.

    Returns ``(y, status)``; ``status`` is -1 on success or the index of the
    first sample whose scalar solve hit ``max_iter``.
    """
    n = f.shape[0]
    y = np.zeros(n)
    k_lin = m * fs + c1
    g_bound = abs(c2 - c1) * _XSECH_MAX / alpha
    y_prev = 0.0
    v_prev = 0.0
    for k in range(n):
        rhs = f[k] + m * fs * v_prev
        lo = (rhs - g_bound) / k_lin
        hi = (rhs + g_bound) / k_lin
        lo -= 1e-12 * max(1.0, abs(lo))
        hi += 1e-12 * max(1.0, abs(hi))
        v = rhs / k_lin
        converged = False
        for _ in range(max_iter):
            ch = np.cosh(alpha * v)
            th = np.tanh(alpha * v)
            h = k_lin * v + (c2 - c1) * v / ch - rhs
            if h == 0.0:
                converged = True
                break
            if h > 0.0:
                hi = v
            else:
                lo = v
            dh = k_lin + (c2 - c1) * (1.0 - alpha * v * th) / ch
            v_new = v - h / dh
            if not (lo < v_new < hi):
                v_new = 0.5 * (lo + hi)
            if abs(v_new - v) <= tol * max(1.0, abs(v)):
                v = v_new
                converged = True
                break
            v = v_new
        if not converged:
            return y, k
        y[k] = y_prev + v / fs
        # carry the velocity the returned samples actually imply
        v_prev = fs * (y[k] - y_prev)
        y_prev = y[k]
    return y, -1


# ---------------------------------------------------------------------------
# fully connected network, flat parameter layout
#   for each layer l = 0..L: W_l (row-major, shape sizes[l+1] x sizes[l]),
#   then b_l when l < L
# ---------------------------------------------------------------------------


def mlp_forward_loop(params, sizes, act, X):
    n = X.shape[0]
    n_layers = sizes.shape[0] - 1
    width = 0
    for i in range(sizes.shape[0]):
        if sizes[i] > width:
            width = sizes[i]
    out = np.empty(n)
    a = np.empty(width)
    z = np.empty(width)
    for s in range(n):
        for i in range(sizes[0]):
            a[i] = X[s, i]
        p = 0
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            last = l == n_layers - 1
            for o in range(n_out):
                acc = 0.0
                for i in range(n_in):
                    acc += params[p + o * n_in + i] * a[i]
                z[o] = acc
            p += n_out * n_in
            if last:
                out[s] = z[0]
            else:
                for o in range(n_out):
                    zz = z[o] + params[p + o]
                    if act == ACT_TANH:
                        a[o] = np.tanh(zz)
                    elif act == ACT_RELU:
                        a[o] = zz if zz > 0.0 else 0.0
                    else:
                        a[o] = zz
                p += n_out
    return out


def mlp_vjp_loop(params, sizes, act, X, cot):
    """Forward pass plus the parameter gradient of <cot, output>."""
    n = X.shape[0]
    n_layers = sizes.shape[0] - 1
    total = 0
    offsets = np.empty(n_layers + 1, dtype=np.int64)
    for l in range(n_layers + 1):
        offsets[l] = total
        total += sizes[l]
    width = 0
    for i in range(sizes.shape[0]):
        if sizes[i] > width:
            width = sizes[i]
    poff = np.empty(n_layers, dtype=np.int64)
    p = 0
    for l in range(n_layers):
        poff[l] = p
        p += sizes[l + 1] * sizes[l]
        if l < n_layers - 1:
            p += sizes[l + 1]
    grad = np.zeros(p)
    out = np.empty(n)
    acts = np.empty(total)
    delta = np.empty(width)
    delta_prev = np.empty(width)
    for s in range(n):
        for i in range(sizes[0]):
            acts[i] = X[s, i]
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            base_in = offsets[l]
            base_out = offsets[l + 1]
            q = poff[l]
            for o in range(n_out):
                acc = 0.0
                for i in range(n_in):
                    acc += params[q + o * n_in + i] * acts[base_in + i]
                if l == n_layers - 1:
                    acts[base_out + o] = acc
                else:
                    zz = acc + params[q + n_out * n_in + o]
                    if act == ACT_TANH:
                        acts[base_out + o] = np.tanh(zz)
                    elif act == ACT_RELU:
                        acts[base_out + o] = zz if zz > 0.0 else 0.0
                    else:
                        acts[base_out + o] = zz
        out[s] = acts[offsets[n_layers]]
        c = cot[s]
        if c == 0.0:
            continue
        delta[0] = c
        for l in range(n_layers - 1, -1, -1):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            base_in = offsets[l]
            q = poff[l]
            for o in range(n_out):
                d = delta[o]
                for i in range(n_in):
                    grad[q + o * n_in + i] += d * acts[base_in + i]
                if l < n_layers - 1:
                    grad[q + n_out * n_in + o] += d
            if l > 0:
                for i in range(n_in):
                    acc = 0.0
                    for o in range(n_out):
                        acc += params[q + o * n_in + i] * delta[o]
                    ai = acts[base_in + i]
                    if act == ACT_TANH:
                        acc *= 1.0 - ai * ai
                    elif act == ACT_RELU:
                        if ai <= 0.0:
                            acc = 0.0
                    delta_prev[i] = acc
                for i in range(n_in):
                    delta[i] = delta_prev[i]
    return out, grad


def _unpack(params, sizes):
    Ws, bs = [], []
    p = 0
    n_layers = len(sizes) - 1
    for l in range(n_layers):
        n_in, n_out = int(sizes[l]), int(sizes[l + 1])
        Ws.append(params[p:p + n_out * n_in].reshape(n_out, n_in))
        p += n_out * n_in
        if l < n_layers - 1:
            bs.append(params[p:p + n_out])
            p += n_out
    return Ws, bs


def _act_np(z, act):
    if act == ACT_TANH:
        return np.tanh(z)
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return z


def _act_grad_np(a, act):
    if act == ACT_TANH:
        return 1.0 - a * a
    if act == ACT_RELU:
        return (a > 0.0).astype(float)
    return np.ones_like(a)


def mlp_forward_np(params, sizes, act, X):
    Ws, bs = _unpack(params, sizes)
    a = X
    for W, b in zip(Ws[:-1], bs):
        a = _act_np(a @ W.T + b, act)
    return (a @ Ws[-1].T)[:, 0]


def mlp_activations_np(params, sizes, act, X):
    """Forward pass keeping every layer's activations for a later backward pass."""
    Ws, bs = _unpack(params, sizes)
    acts = [X]
    for W, b in zip(Ws[:-1], bs):
        acts.append(_act_np(acts[-1] @ W.T + b, act))
    return (acts[-1] @ Ws[-1].T)[:, 0], acts


def mlp_backward_np(params, sizes, act, acts, cot):
    Ws, _ = _unpack(params, sizes)
    grads = []
    delta = cot[:, None]
    for l in range(len(Ws) - 1, -1, -1):
        gW = delta.T @ acts[l]
        if l < len(Ws) - 1:
            grads.append(delta.sum(axis=0))
        grads.append(gW.ravel())
        if l > 0:
            delta = (delta @ Ws[l]) * _act_grad_np(acts[l], act)
    return np.concatenate(grads[::-1])


def mlp_vjp_np(params, sizes, act, X, cot):
    out, acts = mlp_activations_np(params, sizes, act, X)
    return out, mlp_backward_np(params, sizes, act, acts, cot)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

# The network kernels dispatch to numpy on both backends: at these layer
# widths BLAS plus numpy's SIMD tanh beat the scalar loops by 3-4x (see
# benchmarks/bench_kernels.py). The loops remain as per-sample references.
mlp_forward = mlp_forward_np
mlp_vjp = mlp_vjp_np
mlp_forward_compiled = njit(mlp_forward_loop)
mlp_vjp_compiled = njit(mlp_vjp_loop)

if HAS_NUMBA:
    backward_difference = njit(backward_difference_loop)
    simulate_stribeck = njit(simulate_stribeck_loop)
else:
    backward_difference = backward_difference_np
    simulate_stribeck = simulate_stribeck_loop
