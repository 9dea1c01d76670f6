"""Hot numerical kernels.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorised numpy/LAPACK version. Both share the same signature so the calling
code never knows which one it got. The backend is picked at import time
(``SAFDR_NO_NUMBA=1`` selects numpy) and can be switched with
:func:`set_backend`, which is what the tests and the benchmark script do.

The two backends agree to rounding error, not bit-for-bit.
"""
import math

import numpy as np
from scipy.linalg import solve_triangular

from ._numba import HAVE_NUMBA, njit

PROB_CLAMP = 1e-12
PIVOT_REL = 1e-10

# ---------------------------------------------------------------------------
# Fisher discriminant ratio of a feature subset
# ---------------------------------------------------------------------------


def _fdr_loop(delta, sw, idx, ridge_rel, L, z):
    """delta' A^-1 delta with A = S_W[idx, idx], via an in-place Cholesky.

    A is factorised as is; only if a pivot falls below ``PIVOT_REL`` times the
    mean diagonal is it retried with a ridge of ``ridge_rel`` times the mean
    diagonal. ``L`` and ``z`` are scratch buffers of at least (k, k) and (k,).
    Returns NaN when even the ridged matrix is not positive definite.
    """
    k = idx.shape[0]
    trace = 0.0
    for i in range(k):
        trace += sw[idx[i], idx[i]]
    mean_diag = trace / k
    ok = False
    for attempt in range(2):
        lam = 0.0 if attempt == 0 else ridge_rel * mean_diag
        floor = PIVOT_REL * mean_diag if attempt == 0 else 0.0
        ok = True
        for j in range(k):
            s = sw[idx[j], idx[j]] + lam
            for p in range(j):
                s -= L[j, p] * L[j, p]
            if not s > floor:
                ok = False
                break
            d = math.sqrt(s)
            L[j, j] = d
            for i in range(j + 1, k):
                s2 = sw[idx[i], idx[j]]
                for p in range(j):
                    s2 -= L[i, p] * L[j, p]
                L[i, j] = s2 / d
        if ok:
            break
    if not ok:
        return np.nan
    out = 0.0
    for i in range(k):
        s = delta[idx[i]]
        for p in range(i):
            s -= L[i, p] * z[p]
        z[i] = s / L[i, i]
        out += z[i] * z[i]
    return out


def regularised_cholesky(sub, ridge_rel):
    """Cholesky factor of ``sub`` (ridged only if near-singular) and the ridge used.

    Returns ``(None, lam)`` when no factor exists.
    """
    k = sub.shape[0]
    mean_diag = np.trace(sub) / k
    for lam, floor in ((0.0, PIVOT_REL * mean_diag), (ridge_rel * mean_diag, 0.0)):
        a = sub + lam * np.eye(k) if lam else sub
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(chol) ** 2 > floor):
            return chol, lam
    return None, ridge_rel * mean_diag


def _fdr_lapack(delta, sw, idx, ridge_rel, L, z):
    chol, _ = regularised_cholesky(sw[np.ix_(idx, idx)], ridge_rel)
    if chol is None:
        return np.nan
    w = solve_triangular(chol, delta[idx], lower=True, check_finite=False)
    return float(w @ w)


# ---------------------------------------------------------------------------
# One temperature of replica annealing
# ---------------------------------------------------------------------------


def _replace_sorted(src, pos, value, out):
    # out = sorted(src without src[pos], plus value)
    n = src.shape[0]
    w = 0
    placed = False
    for i in range(n):
        if i == pos:
            continue
        if not placed and value < src[i]:
            out[w] = value
            w += 1
            placed = True
        out[w] = src[i]
        w += 1
    if not placed:
        out[w] = value


def _make_temperature_step(fdr_eval, replace_sorted):
    def temperature_step(members, nonmembers, cache, cur_fdr, cur_batch, beta,
                         rm_pos, add_pos, batch_ids, uniforms, mu_diff, sw,
                         ridge_rel, accepted):
        n_rep, k = members.shape
        n_out = nonmembers.shape[1]
        n_prop = rm_pos.shape[1]
        L = np.empty((k, k))
        z = np.empty(k)
        trial = np.empty(k, dtype=members.dtype)
        trial_out = np.empty(n_out, dtype=nonmembers.dtype)
        for r in range(n_rep):
            n_acc = 0
            for q in range(n_prop):
                b = batch_ids[r, q]
                old = cache[r, b]
                if np.isnan(old):
                    old = fdr_eval(mu_diff[b], sw[b], members[r], ridge_rel, L, z)
                    if np.isnan(old):
                        old = 0.0
                    cache[r, b] = old
                i = rm_pos[r, q]
                j = add_pos[r, q]
                leaving = members[r, i]
                entering = nonmembers[r, j]
                replace_sorted(members[r], i, entering, trial)
                new = fdr_eval(mu_diff[b], sw[b], trial, ridge_rel, L, z)
                if np.isnan(new):
                    new = 0.0
                diff = old - new
                if diff < 0.0 or uniforms[r, q] < math.exp(-beta * diff):
                    members[r, :] = trial
                    replace_sorted(nonmembers[r], j, leaving, trial_out)
                    nonmembers[r, :] = trial_out
                    cache[r, :] = np.nan
                    cache[r, b] = new
                    cur_fdr[r] = new
                    n_acc += 1
                else:
                    cur_fdr[r] = old
                cur_batch[r] = b
            accepted[r] = n_acc

    return temperature_step


# ---------------------------------------------------------------------------
# Logistic cross-entropy (sum over samples) and its gradient
# ---------------------------------------------------------------------------


def _loss_grad_loop(X, y, beta, grad):
    n, p = X.shape
    f = 0.0
    for j in range(p):
        grad[j] = 0.0
    for i in range(n):
        zi = 0.0
        for j in range(p):
            zi += X[i, j] * beta[j]
        if zi >= 0.0:
            prob = 1.0 / (1.0 + math.exp(-zi))
        else:
            e = math.exp(zi)
            prob = e / (1.0 + e)
        pc = min(max(prob, PROB_CLAMP), 1.0 - PROB_CLAMP)
        f -= y[i] * math.log(pc) + (1.0 - y[i]) * math.log(1.0 - pc)
        resid = prob - y[i]
        for j in range(p):
            grad[j] += resid * X[i, j]
    return f


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loss_grad_vec(X, y, beta, grad):
    prob = sigmoid(X @ beta)
    pc = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    f = -np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    grad[:] = X.T @ (prob - y)
    return float(f)


def _make_bfgs(loss_grad):
    def bfgs(X, y, max_iter, gtol):
        p = X.shape[1]
        beta = np.zeros(p)
        g = np.empty(p)
        g_new = np.empty(p)
        f = loss_grad(X, y, beta, g)
        H = np.eye(p)
        scaled = False
        it = 0
        converged = np.max(np.abs(g)) <= gtol
        while not converged and it < max_iter:
            d = -(H @ g)
            slope = g @ d
            if slope >= 0.0:
                H = np.eye(p)
                d = -g
                slope = -(g @ g)
            t = 1.0
            ok = False
            b_new = beta
            f_new = f
            for _ in range(60):
                b_new = beta + t * d
                f_new = loss_grad(X, y, b_new, g_new)
                if f_new <= f + 1e-4 * t * slope:
                    ok = True
                    break
                t *= 0.5
            if not ok:
                break
            s = b_new - beta
            yv = g_new - g
            sy = s @ yv
            if sy > 1e-12 * math.sqrt((s @ s) * (yv @ yv)):
                if not scaled:
                    H = (sy / (yv @ yv)) * np.eye(p)
                    scaled = True
                rho = 1.0 / sy
                Hy = H @ yv
                H = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                     + (rho * rho * (yv @ Hy) + rho) * np.outer(s, s))
            beta = b_new
            g[:] = g_new
            f = f_new
            it += 1
            converged = np.max(np.abs(g)) <= gtol
        return beta, converged, it, f

    return bfgs


# ---------------------------------------------------------------------------
# L1-penalised logistic regression: accelerated proximal gradient
# ---------------------------------------------------------------------------


def soft_threshold(x, threshold):
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def _kkt_residual(beta, grad, lam):
    worst = abs(grad[0])
    for j in range(1, beta.shape[0]):
        if beta[j] > 0.0:
            r = abs(grad[j] + lam)
        elif beta[j] < 0.0:
            r = abs(grad[j] - lam)
        else:
            r = max(abs(grad[j]) - lam, 0.0)
        if r > worst:
            worst = r
    return worst


def _prox_step(point, grad, t, lam, out):
    out[0] = point[0] - t * grad[0]
    for j in range(1, point.shape[0]):
        v = point[j] - t * grad[j]
        a = abs(v) - t * lam
        if a > 0.0:
            out[j] = a if v > 0.0 else -a
        else:
            out[j] = 0.0


def _make_fista(loss_grad, kkt_residual, prox_step):
    def fista(X, y, lam, beta0, max_iter, tol):
        p = X.shape[1]
        x = beta0.copy()
        yk = beta0.copy()
        x_new = np.empty(p)
        g = np.empty(p)
        gx = np.empty(p)
        f = loss_grad(X, y, x, gx)
        obj = f + lam * np.sum(np.abs(x[1:]))
        converged = kkt_residual(x, gx, lam) <= tol
        theta = 1.0
        t = 1.0
        it = 0
        restarted = False
        while not converged and it < max_iter:
            it += 1
            fy = loss_grad(X, y, yk, g)
            while True:
                prox_step(yk, g, t, lam, x_new)
                d = x_new - yk
                f_new = loss_grad(X, y, x_new, gx)
                if f_new <= fy + g @ d + (d @ d) / (2.0 * t) + 1e-13 * abs(fy):
                    break
                t *= 0.5
                if t < 1e-20:
                    break
            obj_new = f_new + lam * np.sum(np.abs(x_new[1:]))
            if obj_new > obj and not restarted:
                # momentum overshoot: restart from the last accepted point. A plain
                # prox step from there descends, so the next one is always taken
                # (near the optimum the objective is flat below roundoff).
                theta = 1.0
                yk[:] = x
                restarted = True
                continue
            restarted = False
            theta_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
            yk[:] = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
            x[:] = x_new
            theta = theta_new
            obj = obj_new
            converged = kkt_residual(x, gx, lam) <= tol
        return x, converged, it, obj

    return fista


# ---------------------------------------------------------------------------
# Backend registry
# ---------------------------------------------------------------------------

_NUMPY = {
    "fdr": _fdr_lapack,
    "temperature_step": _make_temperature_step(_fdr_lapack, _replace_sorted),
    "loss_grad": _loss_grad_vec,
    "bfgs": _make_bfgs(_loss_grad_vec),
    "fista": _make_fista(_loss_grad_vec, _kkt_residual, _prox_step),
}

if HAVE_NUMBA:
    _jit = njit(cache=True, nogil=True)
    # reassociation lets the short dot products vectorise; NaN semantics are kept
    _fdr_jit = njit(cache=True, nogil=True, error_model="numpy",
                    fastmath={"reassoc", "contract"})(_fdr_loop)
    _loss_grad_jit = _jit(_loss_grad_loop)
    _NUMBA = {
        "fdr": _fdr_jit,
        "temperature_step": njit(nogil=True)(
            _make_temperature_step(_fdr_jit, _jit(_replace_sorted))),
        "loss_grad": _loss_grad_jit,
        "bfgs": njit(nogil=True)(_make_bfgs(_loss_grad_jit)),
        "fista": njit(nogil=True)(
            _make_fista(_loss_grad_jit, _jit(_kkt_residual), _jit(_prox_step))),
    }
    BACKEND = "numba"
else:
    _NUMBA = None
    BACKEND = "numpy"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous name."""
    global BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and _NUMBA is None:
        raise RuntimeError("numba backend unavailable")
    previous, BACKEND = BACKEND, name
    return previous


def get(name):
    table = _NUMBA if BACKEND == "numba" else _NUMPY
    return table[name]
