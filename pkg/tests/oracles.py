"""Independent reference solutions used by the tests.

Each oracle solves the defining optimization problem with a generic
solver (cvxpy/Clarabel or scipy) instead of the closed forms in the package.
"""

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize_scalar

_TIGHT = dict(solver="CLARABEL", tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)


def prox_l21(M, tau):
    """argmin_X 0.5 ||X - M||_F^2 + tau * sum_j ||X_j||."""
    X = cp.Variable(M.shape)
    obj = 0.5 * cp.sum_squares(X - M) + tau * cp.sum(cp.norm(X, 2, axis=0))
    cp.Problem(cp.Minimize(obj)).solve(**_TIGHT)
    return X.value


def project_simplex(v):
    x = cp.Variable(v.size)
    cp.Problem(cp.Minimize(cp.sum_squares(x - v)), [x >= 0, cp.sum(x) == 1]).solve(**_TIGHT)
    return x.value


def affinity_column(cost_col, omega, forbidden=None):
    """argmin_a (omega / 2) ||a||^2 + cost . a  s.t. a >= 0, sum a = 1, a_k = 0 for k in forbidden."""
    a = cp.Variable(cost_col.size)
    cons = [a >= 0, cp.sum(a) == 1]
    if forbidden is not None:
        cons.append(a[forbidden] == 0)
    cp.Problem(cp.Minimize(0.5 * omega * cp.sum_squares(a) + cost_col @ a), cons).solve(**_TIGHT)
    return a.value


def weights_s(A, q, alpha, beta):
    """argmin_s alpha * sum_ij A_ij (s_i - s_j)^2 + beta ||s - q||^2, summed edge by edge."""
    n = q.size
    s = cp.Variable(n)
    terms = [A[i, j] * cp.square(s[i] - s[j]) for i in range(n) for j in range(n) if A[i, j] > 0]
    smooth = alpha * cp.sum(cp.hstack(terms)) if terms else 0
    cp.Problem(cp.Minimize(smooth + beta * cp.sum_squares(s - q))).solve(**_TIGHT)
    return s.value


def modality_weight(e, Gamma):
    res = minimize_scalar(lambda r: 0.5 * r * r * e + Gamma * (1 - r) ** 2, bounds=(-1.0, 2.0),
                          method="bounded", options={"xatol": 1e-12})
    return res.x


def rasterized_iou(b1, b2, step=0.5):
    """Overlap counted on a grid of cell centers; exact for boxes on the grid."""
    x0 = min(b1.x, b2.x)
    y0 = min(b1.y, b2.y)
    x1 = max(b1.x + b1.w, b2.x + b2.w)
    y1 = max(b1.y + b1.h, b2.y + b2.h)
    xs = np.arange(x0 + step / 2, x1, step)
    ys = np.arange(y0 + step / 2, y1, step)
    X, Y = np.meshgrid(xs, ys)

    def mask(b):
        return (X >= b.x) & (X < b.x + b.w) & (Y >= b.y) & (Y < b.y + b.h)

    m1, m2 = mask(b1), mask(b2)
    union = np.sum(m1 | m2)
    return float(np.sum(m1 & m2) / union) if union else 0.0
