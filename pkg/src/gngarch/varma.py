"""VARMA representation of the variance and covariance recursions.

Squared returns follow a VARMA(max(p, q), p) in the variance innovations
``eta_t = X_t^2 - h_t``; the strictly-lower products ``vechl(X_t X_t^T)``
follow an analogous VARMA on ``D = d(d-1)/2`` coordinates, where neighbour
interactions are carried by the sparse maps ``T_r``.

Pair indices are 1-based in the public :func:`tau` helpers (as in the usual
statement of the index map) and 0-based everywhere else; :func:`pair_index`
is the one place that converts between the two.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .model import GlobalParams, OrderSpec
from .network import NetworkTopology, stage_neighborhoods
from .panel import ReturnPanel

__all__ = [
    "vechl",
    "tau",
    "tau_inverse",
    "pair_index",
    "build_T",
    "build_T_all",
    "TransferMatrices",
    "build_transfer",
    "verify_varma_identity",
    "write_transfer_csv",
]


def vechl(M) -> np.ndarray:
    """Strict lower triangle stacked column by column: ``(M21, M31, .., Md(d-1))``."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"vechl needs a square matrix, got shape {M.shape}")
    return M.T[np.triu_indices(M.shape[0], 1)]


def vechl_stack(A) -> np.ndarray:
    """``vechl`` applied to every matrix of a ``(T, d, d)`` stack."""
    A = np.asarray(A)
    r, c = np.triu_indices(A.shape[1], 1)
    return A[:, c, r]


def tau(d: int, m: int, n: int) -> int:
    """1-based position of pair ``(m, n)``, ``1 <= n < m <= d``, in ``vechl``."""
    if not (1 <= n < m <= d):
        raise ValueError(f"need 1 <= n < m <= d, got m={m}, n={n}, d={d}")
    return (n - 1) * d + (m - n) - n * (n - 1) // 2


def tau_inverse(d: int, k: int) -> tuple[int, int]:
    """Pair ``(m, n)`` with ``tau(d, m, n) == k``."""
    D = d * (d - 1) // 2
    if not 1 <= k <= D:
        raise ValueError(f"index {k} outside 1..{D}")
    n = 1
    # column n holds d - n consecutive entries
    while k > d - n:
        k -= d - n
        n += 1
    return n + k, n


def pair_index(d: int, i: int, j: int) -> int:
    """0-based ``vechl`` position of the unordered 0-based node pair ``{i, j}``."""
    m, n = (i, j) if i > j else (j, i)
    return tau(d, m + 1, n + 1) - 1


def build_T(topology: NetworkTopology, W, r: int) -> sparse.csr_matrix:
    """Sparse ``D x D`` map with ``T_r vechl(X X^T)`` equal to the stage-``r``
    neighbour sums of every pair.

    Row ``pair(i, j)`` collects ``w_iu`` on pair ``{u, j}`` for ``u`` in
    ``N_r(i)`` and ``w_jv`` on pair ``{i, v}`` for ``v`` in ``N_r(j)``
    (excluding the pair members themselves).
    """
    if r < 1:
        raise ValueError("stage must be >= 1")
    W = np.asarray(W, dtype=float)
    d = topology.d
    if W.shape != (d, d):
        raise ValueError("weight matrix does not match the network")
    stage = stage_neighborhoods(topology, r).stage(r)
    rows, cols, vals = [], [], []
    for n in range(d):
        for m in range(n + 1, d):
            row = pair_index(d, m, n)
            for u in stage[m]:
                if u != n:
                    rows.append(row)
                    cols.append(pair_index(d, u, n))
                    vals.append(W[m, u])
            for v in stage[n]:
                if v != m:
                    rows.append(row)
                    cols.append(pair_index(d, m, v))
                    vals.append(W[n, v])
    D = d * (d - 1) // 2
    return sparse.csr_matrix((vals, (rows, cols)), shape=(D, D))


def build_T_all(topology: NetworkTopology, W, r_max: int) -> dict[int, sparse.csr_matrix]:
    return {r: build_T(topology, W, r) for r in range(1, r_max + 1)}


@dataclass(frozen=True)
class TransferMatrices:
    """Coefficient matrices of both VARMA forms (lag ``k`` at list index ``k - 1``)."""

    Phi: list
    Theta: list
    Psi: list
    Pi: list
    Lambda: list
    Omega: list
    Tr: dict
    alpha0: float = 0.0

    @property
    def p(self) -> int:
        return len(self.Theta)

    @property
    def q(self) -> int:
        return len(self.Phi)


def _combine(ar: list, ma: list, p: int, q: int) -> list:
    # AR coefficient on lag m: both parts up to min(p, q), then whichever is longer
    out = []
    for m in range(1, max(p, q) + 1):
        if m <= min(p, q):
            out.append(ar[m - 1] + ma[m - 1])
        elif m <= q:
            out.append(ar[m - 1])
        else:
            out.append(ma[m - 1])
    return out


def build_transfer(params: GlobalParams, orders: OrderSpec, masks, Tr: dict) -> TransferMatrices:
    """Assemble ``Phi, Theta, Psi`` (``d x d``) and ``Pi, Lambda, Omega`` (``D x D``)."""
    params.check_orders(orders)
    masks = np.asarray(masks, dtype=float)
    if masks.ndim != 3:
        raise ValueError("masks must be an (R, d, d) stack")
    d = masks.shape[1]
    if orders.max_stage > masks.shape[0] or any(r not in Tr for r in range(1, orders.max_stage + 1)):
        raise ValueError("missing masks or T_r maps for the referenced stages")
    D = d * (d - 1) // 2
    I_d, I_D = np.eye(d), sparse.identity(D, format="csr")

    Phi = [a * I_d + sum((b * masks[r] for r, b in enumerate(bk)), np.zeros((d, d))) for a, bk in zip(params.alpha, params.beta)]
    Theta = [g * I_d + sum((c * masks[r] for r, c in enumerate(dl)), np.zeros((d, d))) for g, dl in zip(params.gamma, params.delta)]

    def pair_map(own, coefs):
        out = own * I_D
        for r, c in enumerate(coefs):
            out = out + 0.5 * c * Tr[r + 1]
        return sparse.csr_matrix(out)

    Pi = [pair_map(a, bk) for a, bk in zip(params.alpha, params.beta)]
    Lam = [pair_map(g, dl) for g, dl in zip(params.gamma, params.delta)]
    return TransferMatrices(
        Phi=Phi,
        Theta=Theta,
        Psi=_combine(Phi, Theta, orders.p, orders.q),
        Pi=Pi,
        Lambda=Lam,
        Omega=_combine(Pi, Lam, orders.p, orders.q),
        Tr=dict(Tr),
        alpha0=params.alpha0,
    )


def verify_varma_identity(panel, h_panel, cov_trace, transfer: TransferMatrices) -> tuple[float, float]:
    """Largest absolute residual of the variance and covariance VARMA forms.

    Parameters
    ----------
    panel : ReturnPanel or ndarray (T, d)
        Returns ``X_t``.
    h_panel : ndarray (T, d) or ReturnPanel
        Conditional variances aligned with ``panel``.
    cov_trace : ndarray (T, d, d)
        Conditional covariances aligned with ``panel``.
    transfer : TransferMatrices

    Returns
    -------
    (float, float)
        Residuals over every time with a full lag window.
    """
    X = panel.X if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=float)
    H = h_panel.X if isinstance(h_panel, ReturnPanel) else np.asarray(h_panel, dtype=float)
    S = np.asarray(cov_trace, dtype=float)
    T, d = X.shape
    if H.shape != (T, d) or S.shape != (T, d, d):
        raise ValueError(f"shape mismatch: returns {X.shape}, variances {H.shape}, covariances {S.shape}")
    u = max(transfer.p, transfer.q)
    if T <= u:
        raise ValueError("trace too short for the lag window")

    alpha0 = transfer.alpha0
    X2 = X * X
    eta = X2 - H
    vX = vechl_stack(np.einsum("ti,tj->tij", X, X))
    veta = vX - vechl_stack(S)

    res_v = X2[u:] - alpha0 - eta[u:]
    res_c = vX[u:] - alpha0 - veta[u:]
    for m, (Psi, Om) in enumerate(zip(transfer.Psi, transfer.Omega), start=1):
        res_v = res_v - X2[u - m : T - m] @ Psi.T
        res_c = res_c - (Om @ vX[u - m : T - m].T).T
    for l, (Th, Lm) in enumerate(zip(transfer.Theta, transfer.Lambda), start=1):
        res_v = res_v + eta[u - l : T - l] @ Th.T
        res_c = res_c + (Lm @ veta[u - l : T - l].T).T
    rv = float(np.max(np.abs(res_v)))
    rc = float(np.max(np.abs(res_c))) if res_c.size else 0.0
    return rv, rc


def write_transfer_csv(directory, transfer: TransferMatrices) -> list[Path]:
    """Write ``d x d`` matrices densely and ``D x D`` ones as ``row,col,value`` triplets."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("Phi", "Theta", "Psi"):
        for k, M in enumerate(getattr(transfer, name), start=1):
            path = directory / f"{name}_{k}.csv"
            np.savetxt(path, M, delimiter=",", fmt="%.17g")
            written.append(path)
    mats = [(f"{n}_{k}", M) for n in ("Pi", "Lambda", "Omega") for k, M in enumerate(getattr(transfer, n), start=1)]
    mats += [(f"T_{r}", M) for r, M in sorted(transfer.Tr.items())]
    for name, M in mats:
        path = directory / f"{name}.csv"
        coo = sparse.coo_matrix(M)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            for i, j, v in zip(coo.row, coo.col, coo.data):
                w.writerow([int(i), int(j), repr(float(v))])
        written.append(path)
    return written
