"""Compiled inner loops for simulation, filtering and loss/gradient evaluation.

The recursion is written in its assembled form. With the linear map

    N_r(A) = offdiag(sym(M_r offdiag(A))) + diag(M_r diag(A)),

where ``sym(B) = (B + B^T) / 2``, the assembled covariance obeys

    S_t = a0 J + sum_k [C_k o X X^T + sum_r b_kr N_r(X X^T)]
               + sum_l [g_l S_{t-l} + sum_r d_lr N_r(S_{t-l})]

with ``C_k`` the own-return coefficient matrix (constant ``a_k`` for the plain
model, sign-regime dependent for the threshold model). The gradient is carried
forward by differentiating this map, so ``dS_t`` obeys the same persistence
recursion with a parameter-specific driving term.

History is kept in ring buffers of length ``L = max(p, q) + 1``; time ``tau``
lives in slot ``tau % L``.
"""
import numpy as np
from numba import njit

MSE, QLIKE, NLL = 0, 1, 2
# free-parameter kinds used by the gradient kernel
K_ALPHA0, K_ALPHA, K_GAMMA, K_BETA, K_DELTA = 0, 1, 2, 3, 4

_LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _add_stage(M, A, scale, out, work):
    """``out += scale * N(A)`` for one masked weight matrix ``M``."""
    d = A.shape[0]
    for i in range(d):
        for j in range(d):
            work[i, j] = 0.0
    # work = M @ offdiag(A), skipping zero weights
    for i in range(d):
        for u in range(d):
            m = M[i, u]
            if m != 0.0:
                for j in range(d):
                    if j != u:
                        work[i, j] += m * A[u, j]
    for i in range(d):
        acc = 0.0
        for u in range(d):
            acc += M[i, u] * A[u, u]
        out[i, i] += scale * acc
        for j in range(i + 1, d):
            v = 0.5 * scale * (work[i, j] + work[j, i])
            out[i, j] += v
            out[j, i] += v


@njit(cache=True)
def _own_coef(xi, xj, same, apos, aneg, ainter):
    if same:
        return apos if xi >= 0.0 else aneg
    if xi >= 0.0 and xj >= 0.0:
        return apos
    if xi < 0.0 and xj < 0.0:
        return aneg
    return ainter


@njit(cache=True)
def _step(t, L, alpha0, apos, aneg, ainter, gamma, beta, delta, masks, xbuf, sbuf, outer, out, work):
    """Assembled ``S_t`` into ``out``; ``outer[k]`` receives ``X_{t-k-1} X_{t-k-1}^T``."""
    d = out.shape[0]
    q = apos.shape[0]
    p = gamma.shape[0]
    R = masks.shape[0]
    for i in range(d):
        for j in range(d):
            out[i, j] = alpha0
    for k in range(q):
        x = xbuf[(t - k - 1 + L) % L]
        xx = outer[k]
        for i in range(d):
            for j in range(d):
                xx[i, j] = x[i] * x[j]
                out[i, j] += _own_coef(x[i], x[j], i == j, apos[k], aneg[k], ainter[k]) * xx[i, j]
        for r in range(R):
            if r < beta.shape[1] and beta[k, r] != 0.0:
                _add_stage(masks[r], xx, beta[k, r], out, work)
    for l in range(p):
        S = sbuf[(t - l - 1 + L) % L]
        g = gamma[l]
        for i in range(d):
            for j in range(d):
                out[i, j] += g * S[i, j]
        for r in range(R):
            if r < delta.shape[1] and delta[l, r] != 0.0:
                _add_stage(masks[r], S, delta[l, r], out, work)


@njit(cache=True)
def _all_finite(A):
    for v in A.ravel():
        if not np.isfinite(v):
            return False
    return True


@njit(cache=True)
def make_pd_kernel(A, eps):
    vals = np.linalg.eigvalsh(A)
    if vals[0] >= eps:
        return A.copy(), False
    vals, vecs = np.linalg.eigh(A)
    d = A.shape[0]
    for i in range(d):
        if vals[i] < eps:
            vals[i] = eps
    B = (vecs * vals) @ vecs.T
    B = 0.5 * (B + B.T)
    ev = np.linalg.eigvalsh(B)
    if ev[0] < eps:
        # slack covers the eigensolver's own roundoff on re-inspection
        slack = 16.0 * 2.220446049250313e-16 * max(abs(ev[0]), abs(ev[d - 1]))
        for i in range(d):
            B[i, i] += eps - ev[0] + slack
    return B, True


@njit(cache=True)
def _clip_pullback(A, G, eps):
    """Pull a gradient ``G`` with respect to ``clip(A)`` back to ``A``.

    ``clip`` floors the eigenvalues of ``A`` at ``eps``; its derivative is the
    divided-difference (Daleckii-Krein) form ``V (Gamma o V^T dA V) V^T``.
    """
    lam, V = np.linalg.eigh(A)
    d = lam.shape[0]
    f = np.maximum(lam, eps)
    Gt = V.T @ G @ V
    tiny = 1e-13 * max(1.0, np.max(np.abs(lam)))
    for a in range(d):
        for b in range(d):
            gap = lam[a] - lam[b]
            if abs(gap) > tiny:
                Gt[a, b] *= (f[a] - f[b]) / gap
            else:
                Gt[a, b] *= 1.0 if 0.5 * (lam[a] + lam[b]) > eps else 0.0
    return V @ Gt @ V.T


@njit(cache=True)
def simulate_kernel(T_total, x0, S0, alpha0, apos, aneg, ainter, gamma, beta, delta, masks, Z, eps, threshold):
    """Simulate ``X_1 .. X_T_total``; index 0 of the outputs holds the initial state.

    Returns ``(X, S, repaired, diverged_at)`` with ``diverged_at = -1`` when the
    path stayed finite and below ``threshold``. On divergence the outputs are
    valid up to (excluding) ``diverged_at``.
    """
    d = x0.shape[0]
    q = apos.shape[0]
    p = gamma.shape[0]
    L = max(p, q) + 1
    xbuf = np.zeros((L, d))
    sbuf = np.empty((L, d, d))
    for s in range(L):
        sbuf[s] = S0
    xbuf[0] = x0
    X = np.zeros((T_total + 1, d))
    S = np.zeros((T_total + 1, d, d))
    repaired = np.zeros(T_total + 1, dtype=np.bool_)
    X[0] = x0
    S[0] = S0
    outer = np.empty((q, d, d))
    work = np.empty((d, d))
    diverged_at = -1
    for t in range(1, T_total + 1):
        out = np.empty((d, d))
        _step(t, L, alpha0, apos, aneg, ainter, gamma, beta, delta, masks, xbuf, sbuf, outer, out, work)
        if not _all_finite(out) or np.max(np.abs(out)) > threshold * threshold:
            diverged_at = t
            break
        slot = t % L
        sbuf[slot] = out
        S[t] = out
        # far from the origin an absolute floor is below roundoff; scale it
        floor = max(eps, 1e-12 * np.max(np.abs(np.diag(out))))
        P, flag = make_pd_kernel(out, floor)
        repaired[t] = flag
        ok = True
        try:
            C = np.linalg.cholesky(P)
        except Exception:
            ok = False
        if not ok:
            diverged_at = t
            break
        x = C @ Z[t - 1]
        X[t] = x
        xbuf[slot] = x
        if not _all_finite(x) or np.max(np.abs(x)) > threshold:
            diverged_at = t
            break
    return X, S, repaired, diverged_at


@njit(cache=True)
def filter_kernel(X, S0, alpha0, apos, aneg, ainter, gamma, beta, delta, masks):
    """Assembled ``S_1 .. S_T`` for observed ``X_0 .. X_{T-1}`` (pre-sample X = 0, S = S0)."""
    T, d = X.shape
    q = apos.shape[0]
    p = gamma.shape[0]
    L = max(p, q) + 1
    xbuf = np.zeros((L, d))
    sbuf = np.empty((L, d, d))
    for s in range(L):
        sbuf[s] = S0
    xbuf[0] = X[0]
    S = np.empty((T, d, d))
    outer = np.empty((q, d, d))
    work = np.empty((d, d))
    out = np.empty((d, d))
    for t in range(1, T + 1):
        _step(t, L, alpha0, apos, aneg, ainter, gamma, beta, delta, masks, xbuf, sbuf, outer, out, work)
        slot = t % L
        sbuf[slot] = out
        S[t - 1] = out
        if t < T:
            xbuf[slot] = X[t]
    return S


@njit(cache=True)
def loss_grad_kernel(X, alpha0, alpha, gamma, beta, delta, masks, kinds, lags, stages, loss_kind, want_grad, eps):
    """Loss over ``t = 1 .. T-1`` and its gradient over the listed free parameters.

    ``kinds/lags/stages`` describe each free parameter (lags and stages
    0-based). Repaired steps are differentiated through the eigenvalue clip.
    Returns ``(loss, grad, n_repairs)``; ``loss`` is NaN when the recursion
    leaves the finite range.
    """
    T, d = X.shape
    q = alpha.shape[0]
    p = gamma.shape[0]
    L = max(p, q) + 1
    P = kinds.shape[0] if want_grad else 0
    xbuf = np.zeros((L, d))
    sbuf = np.zeros((L, d, d))
    dbuf = np.zeros((L, P, d, d))
    for s in range(L):
        for i in range(d):
            sbuf[s, i, i] = alpha0
    # the pre-sample covariance alpha0 * I depends on alpha0
    for j in range(P):
        if kinds[j] == K_ALPHA0:
            for s in range(L):
                for i in range(d):
                    dbuf[s, j, i, i] = 1.0
    xbuf[0] = X[0]
    outer = np.empty((q, d, d))
    work = np.empty((d, d))
    dout = np.empty((P, d, d))
    grad = np.zeros(P)
    total = 0.0
    n_rep = 0
    for t in range(1, T):
        out = np.empty((d, d))
        _step(t, L, alpha0, alpha, alpha, alpha, gamma, beta, delta, masks, xbuf, sbuf, outer, out, work)
        if not _all_finite(out):
            return np.nan, grad, n_rep
        for j in range(P):
            Dj = dout[j]
            kind = kinds[j]
            if kind == K_ALPHA0:
                Dj[:, :] = 1.0
            elif kind == K_ALPHA:
                Dj[:, :] = outer[lags[j]]
            elif kind == K_GAMMA:
                Dj[:, :] = sbuf[(t - lags[j] - 1 + L) % L]
            elif kind == K_BETA:
                Dj[:, :] = 0.0
                _add_stage(masks[stages[j]], outer[lags[j]], 1.0, Dj, work)
            else:
                Dj[:, :] = 0.0
                _add_stage(masks[stages[j]], sbuf[(t - lags[j] - 1 + L) % L], 1.0, Dj, work)
            for l in range(p):
                prev = dbuf[(t - l - 1 + L) % L, j]
                g = gamma[l]
                for a in range(d):
                    for b in range(d):
                        Dj[a, b] += g * prev[a, b]
                for r in range(masks.shape[0]):
                    if r < delta.shape[1] and delta[l, r] != 0.0:
                        _add_stage(masks[r], prev, delta[l, r], Dj, work)
        slot = t % L
        sbuf[slot] = out
        for j in range(P):
            dbuf[slot, j] = dout[j]
        x = X[t]
        xbuf[slot] = x

        if loss_kind == MSE:
            acc = 0.0
            for a in range(d):
                for b in range(d):
                    e = x[a] * x[b] - out[a, b]
                    acc += e * e
                    for j in range(P):
                        grad[j] -= 2.0 * e * dout[j, a, b] / (d * d)
            total += acc / (d * d)
        else:
            Pm, flag = make_pd_kernel(out, eps)
            if flag:
                n_rep += 1
            ok = True
            try:
                C = np.linalg.cholesky(Pm)
            except Exception:
                ok = False
            if not ok:
                return np.nan, grad, n_rep
            logdet = 0.0
            for a in range(d):
                logdet += 2.0 * np.log(C[a, a])
            Pinv = np.linalg.inv(Pm)
            u = Pinv @ x
            total += logdet + np.dot(x, u)
            if P > 0:
                G = Pinv - np.outer(u, u)
                if flag:
                    G = _clip_pullback(out, G, eps)
                for j in range(P):
                    acc = 0.0
                    for a in range(d):
                        for b in range(d):
                            acc += G[a, b] * dout[j, a, b]
                    grad[j] += acc
    n = T - 1
    loss = total / n
    for j in range(P):
        grad[j] /= n
    if loss_kind == NLL:
        loss = 0.5 * loss + 0.5 * d * _LOG_2PI
        for j in range(P):
            grad[j] *= 0.5
    return loss, grad, n_rep
