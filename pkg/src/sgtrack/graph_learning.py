"""Joint learning of sparse codes, noise, graph affinity, patch weights and
modality weights by block-coordinate ADMM.

The model, for modalities m = 1..M with feature matrices X^m (d_m x n)::

    sum_m [ (r_m^2 / 2) ||X^m - X^m Z^m - E^m||_F^2 + lam ||E^m||_{2,1} ]
      + gamma ||Z||_{2,1}
      + delta * sum_ij ||Z_i - Z_j||^2 A_ij
      + alpha * sum_ij (s_i - s_j)^2 A_ij
      + beta ||s - q||^2 + Gamma ||1 - r||^2 + (omega / 2) ||A||_F^2

    s.t.  A^T 1 = 1,  A >= 0,  diag(Z^m) = 0

Z = [Z^1; ...; Z^M] stacks the codes (Mn x n), Z_i is its i-th column.
Each outer iteration updates Z (an inner ADMM on the split Z = J), then E,
A, s and r in closed form, so every block step is an exact minimization and
the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


@dataclass
class SolverConfig:
    lam: float = 0.1
    gamma: float = 0.1
    delta: float = 11.0
    omega: float = 1.0
    alpha: float = 10.0
    beta: float = 0.15
    sigma: float = 37.0
    max_outer_iters: int = 50
    tol_residual: float = 1e-4
    rho: float = 1.0
    inner_iters: int = 25
    exclude_diagonal: bool = True
    gamma_rule: str = "energy"  # or "first_error"

    def __post_init__(self):
        for name in ("lam", "gamma", "delta", "omega", "alpha", "beta", "sigma", "rho", "tol_residual"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_rule not in ("energy", "first_error"):
            raise ValueError(f"unknown gamma_rule {self.gamma_rule!r}")
        if self.max_outer_iters < 1 or self.inner_iters < 1:
            raise ValueError("iteration counts must be >= 1")


@dataclass
class GraphState:
    Z: np.ndarray  # (M*n, n) stacked codes
    E: list[np.ndarray]  # per modality (d_m, n)
    A: np.ndarray  # (n, n), column-stochastic
    s: np.ndarray  # raw patch weights
    s_hat: np.ndarray  # sigmoid-mapped patch weights
    r: np.ndarray  # modality weights
    q: np.ndarray  # seed vector
    Gamma: float = 0.0
    objective_trace: list[float] = field(default_factory=list)
    residual_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


# -- kernels ---------------------------------------------------------------

def prox_l21(M: np.ndarray, tau: float) -> np.ndarray:
    """Column-wise group shrinkage, the prox of tau * ||.||_{2,1}."""
    M = np.asarray(M, dtype=float)
    if tau == 0:
        return M.copy()
    norms = np.linalg.norm(M, axis=0)
    scale = np.zeros_like(norms)
    big = norms > tau
    scale[big] = 1.0 - tau / norms[big]
    return M * scale[None, :]


def l21_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, axis=0).sum())


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {u >= 0, sum(u) = 1} by sort and threshold."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_simplex_columns(V: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Project every column of V onto the simplex.

    With a boolean `mask`, only the True entries of each column take part;
    the others are set to zero.
    """
    V = np.asarray(V, dtype=float)
    if mask is None:
        mask = np.ones_like(V, dtype=bool)
    W = np.where(mask, V, -np.inf)
    U = -np.sort(-W, axis=0)
    valid = np.isfinite(U)
    css = np.cumsum(np.where(valid, U, 0.0), axis=0) - 1.0
    k = np.arange(1, V.shape[0] + 1)[:, None]
    cond = valid & (U - css / k > 0)
    rho = V.shape[0] - 1 - np.argmax(cond[::-1], axis=0)
    theta = css[rho, np.arange(V.shape[1])] / (rho + 1)
    out = np.maximum(V - theta[None, :], 0.0)
    out[~mask] = 0.0
    return out


def pairwise_sq_dists(Z: np.ndarray) -> np.ndarray:
    """D_ij = ||Z_i - Z_j||^2 over columns."""
    sq = np.sum(Z * Z, axis=0)
    D = sq[:, None] + sq[None, :] - 2.0 * (Z.T @ Z)
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def laplacian(A: np.ndarray) -> np.ndarray:
    """D_r + D_c - A - A^T; s^T L s = sum_ij (s_i - s_j)^2 A_ij."""
    return np.diag(A.sum(axis=1) + A.sum(axis=0)) - A - A.T


def update_affinity(Z: np.ndarray, delta: float, omega: float, s: np.ndarray | None = None,
                    alpha: float = 0.0, exclude_diagonal: bool = True) -> np.ndarray:
    """Closed-form affinity: column j = simplex projection of -cost_.j / omega.

    cost_ij = delta ||Z_i - Z_j||^2 (+ alpha (s_i - s_j)^2 when `s` is
    given, which is the full A-block of the joint model). With
    `exclude_diagonal` self-loops are forbidden (A_ii = 0).
    """
    cost = delta * pairwise_sq_dists(Z)
    if s is not None and alpha:
        s = np.asarray(s, dtype=float)
        cost = cost + alpha * (s[:, None] - s[None, :]) ** 2
    n = cost.shape[0]
    if exclude_diagonal and n > 1:
        mask = ~np.eye(n, dtype=bool)
        return project_simplex_columns(-cost / omega, mask)
    return project_simplex_columns(-cost / omega)


def update_weights_s(A: np.ndarray, q: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Minimizer of alpha * sum_ij (s_i - s_j)^2 A_ij + beta ||s - q||^2."""
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("affinity matrix has non-finite entries")
    q = np.asarray(q, dtype=float)
    H = alpha * laplacian(A) + beta * np.eye(q.size)
    return scipy.linalg.solve(H, beta * q, assume_a="pos")


def update_modality_weights(errors: np.ndarray, Gamma: float) -> np.ndarray:
    """Minimizer of (r^2 / 2) e_m + Gamma (1 - r)^2 for each modality."""
    e = np.asarray(errors, dtype=float)
    return 2.0 * Gamma / (e + 2.0 * Gamma)


_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)


def sigmoid_map(s: np.ndarray, sigma: float) -> np.ndarray:
    """Logistic map with slope sigma.

    Values that would round to exactly 0 or 1 are returned as the nearest
    double strictly inside (0, 1), which is also the closer representable
    neighbour of the exact value.
    """
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-sigma * np.asarray(s, dtype=float)))
    return np.clip(out, _OPEN_LO, _OPEN_HI)


def choose_gamma(X: list[np.ndarray], errors: np.ndarray, rule: str = "energy") -> float:
    """Regularization weight of the modality weights, fixed once per solve.

    "energy": half the mean feature energy, so a modality that reconstructs
    nothing (e = ||X^m||^2) sits near r = 0.5.
    "first_error": half the mean reconstruction error at the first update.
    """
    if rule == "first_error":
        value = float(np.mean(errors)) / 2.0
    else:
        value = float(np.mean([np.sum(Xm * Xm) for Xm in X])) / 2.0
    return max(value, 1e-12)


def update_noise_E(X: list[np.ndarray], Z: np.ndarray, r: np.ndarray, lam: float) -> list[np.ndarray]:
    n = X[0].shape[1]
    out = []
    for m, Xm in enumerate(X):
        R = Xm - Xm @ Z[m * n:(m + 1) * n]
        if r[m] == 0:
            out.append(R)  # no data term: the residual is absorbed entirely
        else:
            out.append(prox_l21(R, lam / r[m] ** 2))
    return out


def reconstruction_errors(X: list[np.ndarray], Z: np.ndarray, E: list[np.ndarray]) -> np.ndarray:
    n = X[0].shape[1]
    return np.array([
        float(np.sum((Xm - Xm @ Z[m * n:(m + 1) * n] - Em) ** 2)) for m, (Xm, Em) in enumerate(zip(X, E))
    ])


# -- Z block ---------------------------------------------------------------

def _zero_code_diagonal(Z: np.ndarray, n: int) -> np.ndarray:
    Z = Z.copy()
    idx = np.arange(n)
    for m in range(Z.shape[0] // n):
        Z[m * n + idx, idx] = 0.0
    return Z


def prox_codes(V: np.ndarray, tau: float, n: int) -> np.ndarray:
    """prox of tau * ||.||_{2,1} restricted to codes with zero diagonal blocks."""
    return prox_l21(_zero_code_diagonal(V, n), tau)


def z_subproblem_objective(X, E, r, A, Z, gamma, delta) -> float:
    n = X[0].shape[1]
    val = 0.0
    for m, (Xm, Em) in enumerate(zip(X, E)):
        val += 0.5 * r[m] ** 2 * float(np.sum((Xm - Xm @ Z[m * n:(m + 1) * n] - Em) ** 2))
    val += gamma * l21_norm(Z)
    val += delta * float(np.sum(pairwise_sq_dists(Z) * A))
    return val


@dataclass
class CodesIterate:
    Z: np.ndarray  # smooth-part iterate
    J: np.ndarray  # sparse split variable
    U: np.ndarray  # scaled dual
    primal_residual: float
    dual_residual: float


class _SylvesterSolver:
    """Solves (r^2 G + rho I) Z + Z (2 delta L) = C by two eigendecompositions."""

    def __init__(self, G_eig, r2: float, rho: float, L: np.ndarray, delta: float):
        self.gvals, self.gvecs = G_eig
        lvals, self.lvecs = np.linalg.eigh(2.0 * delta * L)
        self.denom = (r2 * self.gvals + rho)[:, None] + np.maximum(lvals, 0.0)[None, :]

    def __call__(self, C: np.ndarray) -> np.ndarray:
        T = self.gvecs.T @ C @ self.lvecs
        return self.gvecs @ (T / self.denom) @ self.lvecs.T


def update_codes_Z(X, E, r, A, gamma, delta, rho, J, U, _solvers=None) -> CodesIterate:
    """One ADMM pass on the Z block: smooth solve for Z, group prox for J,
    scaled dual ascent on U."""
    n = X[0].shape[1]
    L = laplacian(A)
    if _solvers is None:
        _solvers = [
            _SylvesterSolver(np.linalg.eigh(Xm.T @ Xm), r[m] ** 2, rho, L, delta)
            for m, Xm in enumerate(X)
        ]
    Z = np.empty_like(J)
    for m, (Xm, Em) in enumerate(zip(X, E)):
        blk = slice(m * n, (m + 1) * n)
        C = r[m] ** 2 * (Xm.T @ (Xm - Em)) + rho * (J[blk] - U[blk])
        Z[blk] = _solvers[m](C)
    J_new = prox_codes(Z + U, gamma / rho, n)
    U_new = U + Z - J_new
    zn = max(1.0, float(np.linalg.norm(Z)))
    return CodesIterate(
        Z=Z,
        J=J_new,
        U=U_new,
        primal_residual=float(np.linalg.norm(Z - J_new)) / zn,
        dual_residual=rho * float(np.linalg.norm(J_new - J)) / zn,
    )


def _prox_gradient_codes(X, E, r, A, Z, gamma, delta, steps: int = 5) -> np.ndarray:
    """ISTA steps on the Z subproblem; each step cannot increase it."""
    n = X[0].shape[1]
    L = laplacian(A)
    lip = max(r[m] ** 2 * np.linalg.norm(Xm, 2) ** 2 for m, Xm in enumerate(X))
    lip += 2.0 * delta * max(float(np.linalg.eigvalsh(L).max()), 0.0) + 1e-12
    for _ in range(steps):
        grad = np.empty_like(Z)
        for m, (Xm, Em) in enumerate(zip(X, E)):
            blk = slice(m * n, (m + 1) * n)
            grad[blk] = -r[m] ** 2 * Xm.T @ (Xm - Xm @ Z[blk] - Em) + 2.0 * delta * Z[blk] @ L
        Z = prox_codes(Z - grad / lip, gamma / lip, n)
    return Z


# -- full model ------------------------------------------------------------

def objective(X: list[np.ndarray], state: GraphState, cfg: SolverConfig) -> float:
    """Value of the joint model at the given iterates (all eight terms)."""
    n = X[0].shape[1]
    val = 0.0
    for m, (Xm, Em) in enumerate(zip(X, state.E)):
        R = Xm - Xm @ state.Z[m * n:(m + 1) * n] - Em
        val += 0.5 * state.r[m] ** 2 * float(np.sum(R * R)) + cfg.lam * l21_norm(Em)
    val += cfg.gamma * l21_norm(state.Z)
    val += cfg.delta * float(np.sum(pairwise_sq_dists(state.Z) * state.A))
    ds = (state.s[:, None] - state.s[None, :]) ** 2
    val += cfg.alpha * float(np.sum(ds * state.A))
    val += cfg.beta * float(np.sum((state.s - state.q) ** 2))
    val += state.Gamma * float(np.sum((1.0 - state.r) ** 2))
    val += 0.5 * cfg.omega * float(np.sum(state.A ** 2))
    return val


def initial_affinity(n: int, exclude_diagonal: bool = True) -> np.ndarray:
    if n == 1:
        return np.ones((1, 1))
    if exclude_diagonal:
        return (np.ones((n, n)) - np.eye(n)) / (n - 1)
    return np.full((n, n), 1.0 / n)


def solve_joint(X: list[np.ndarray], q: np.ndarray, cfg: SolverConfig | None = None) -> GraphState:
    """Run the block-coordinate solver from the default initialization.

    Block order per outer iteration: Z (inner ADMM, warm-started split and
    duals) -> E -> A -> s -> r. Gamma is fixed at the first r-update (see
    `choose_gamma`). s starts constant at mean(q) so the first affinity
    update is driven by the codes alone. Stops once the relative primal residual
    ||Z - J|| / max(1, ||Z||) and the relative objective decrease both fall
    below ``cfg.tol_residual``.
    """
    cfg = cfg or SolverConfig()
    X = [np.asarray(Xm, dtype=float) for Xm in X]
    n = X[0].shape[1]
    if any(Xm.shape[1] != n for Xm in X):
        raise ValueError("all modalities must have the same number of patches")
    if any(not np.all(np.isfinite(Xm)) for Xm in X):
        raise ValueError("non-finite feature values")
    q = np.asarray(q, dtype=float)
    if q.shape != (n,):
        raise ValueError(f"seed vector has length {q.shape[0]}, expected {n}")
    M = len(X)

    state = GraphState(
        Z=np.zeros((M * n, n)),
        E=[np.zeros_like(Xm) for Xm in X],
        A=initial_affinity(n, cfg.exclude_diagonal),
        s=np.full(n, q.mean()),
        s_hat=sigmoid_map(np.full(n, q.mean()), cfg.sigma),
        r=np.ones(M),
        q=q,
    )
    J = np.zeros_like(state.Z)
    U = np.zeros_like(state.Z)
    G_eigs = [np.linalg.eigh(Xm.T @ Xm) for Xm in X]
    gamma_fixed = False
    prev = objective(X, state, cfg)
    state.objective_trace.append(prev)

    for it in range(1, cfg.max_outer_iters + 1):
        # Z block
        L = laplacian(state.A)
        solvers = [_SylvesterSolver(G_eigs[m], state.r[m] ** 2, cfg.rho, L, cfg.delta) for m in range(M)]
        for _ in range(cfg.inner_iters):
            step = update_codes_Z(X, state.E, state.r, state.A, cfg.gamma, cfg.delta, cfg.rho, J, U, solvers)
            J, U = step.J, step.U
            if step.primal_residual < 0.1 * cfg.tol_residual and step.dual_residual < 0.1 * cfg.tol_residual:
                break
        f_old = z_subproblem_objective(X, state.E, state.r, state.A, state.Z, cfg.gamma, cfg.delta)
        f_new = z_subproblem_objective(X, state.E, state.r, state.A, J, cfg.gamma, cfg.delta)
        if f_new <= f_old:
            state.Z = J.copy()
        else:
            Zpg = _prox_gradient_codes(X, state.E, state.r, state.A, state.Z, cfg.gamma, cfg.delta)
            if z_subproblem_objective(X, state.E, state.r, state.A, Zpg, cfg.gamma, cfg.delta) <= f_old:
                state.Z = Zpg

        state.E = update_noise_E(X, state.Z, state.r, cfg.lam)
        state.A = update_affinity(state.Z, cfg.delta, cfg.omega, state.s, cfg.alpha, cfg.exclude_diagonal)
        state.s = update_weights_s(state.A, q, cfg.alpha, cfg.beta)
        errors = reconstruction_errors(X, state.Z, state.E)
        if not gamma_fixed:
            state.Gamma = choose_gamma(X, errors, cfg.gamma_rule)
            gamma_fixed = True
        state.r = update_modality_weights(errors, state.Gamma)

        cur = objective(X, state, cfg)
        state.objective_trace.append(cur)
        state.residual_trace.append(step.primal_residual)
        state.iterations = it
        rel_change = (prev - cur) / max(1.0, abs(prev))
        prev = cur
        if step.primal_residual < cfg.tol_residual and rel_change < cfg.tol_residual:
            state.converged = True
            break

    state.s_hat = sigmoid_map(state.s, cfg.sigma)
    return state
