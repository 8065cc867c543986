"""Group-lasso least squares for the node-wise vector-on-vector regression.

For a target node ``j`` the response ``A`` (n x M) holds the node's own
scores and the design ``Z`` (n x M(p-1)(q+1)) stacks ``x_c * a_k`` column
blocks, covariate-major. The problem solved is

    min_B  1/(2n) ||A - Z B||_F^2 + lam * sum_g ||B_g||_F

where ``B_g`` is the M x M row block of ``B`` matching design block ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateError, DimensionError, NumericalError

DEFAULT_RHO = 1.0
DEFAULT_TOL_ABS = 1e-5
DEFAULT_TOL_REL = 1e-4
DEFAULT_MAX_ITER = 1000
RIDGE = 1e-8


@dataclass(frozen=True)
class GroupLayout:
    """Block structure of a design: group ``g`` is (covariate c, regressor node k)."""

    target: int
    p: int
    q: int
    M: int

    @property
    def others(self) -> list[int]:
        return [k for k in range(self.p) if k != self.target]

    @property
    def groups(self) -> list[tuple[int, int]]:
        return [(c, k) for c in range(self.q + 1) for k in self.others]

    @property
    def n_groups(self) -> int:
        return (self.q + 1) * (self.p - 1)

    def group_index(self, c: int, k: int) -> int:
        if k == self.target:
            raise KeyError(f"node {k} is the target")
        return c * (self.p - 1) + (k if k < self.target else k - 1)

    def columns(self, g: int) -> slice:
        return slice(g * self.M, (g + 1) * self.M)

    def column_index(self, groups) -> np.ndarray:
        groups = list(groups)
        if not groups:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(g * self.M, (g + 1) * self.M) for g in groups])


@dataclass
class DesignMatrix:
    Z: np.ndarray
    layout: GroupLayout


@dataclass
class CoefficientBlocks:
    """Estimated M x M blocks ``blocks[c, k]`` with ``a_j ~ sum B[c,k] x_c a_k``.

    The slot ``k == target`` is unused and kept at zero so nodes index
    directly.
    """

    layout: GroupLayout
    blocks: np.ndarray  # (q+1, p, M, M)

    @property
    def target(self) -> int:
        return self.layout.target

    def norms(self) -> np.ndarray:
        """Frobenius norms, shape (q+1, p); the target column is zero."""
        return np.sqrt(np.sum(self.blocks**2, axis=(2, 3)))

    def block(self, c: int, k: int) -> np.ndarray:
        return self.blocks[c, k]

    def stacked(self) -> np.ndarray:
        """Coefficient matrix in design layout, (n_groups * M) x M."""
        L = self.layout
        out = np.empty((L.n_groups * L.M, L.M))
        for g, (c, k) in enumerate(L.groups):
            out[L.columns(g)] = self.blocks[c, k].T
        return out

    @classmethod
    def from_stacked(cls, coef: np.ndarray, layout: GroupLayout) -> "CoefficientBlocks":
        L = layout
        blocks = np.zeros((L.q + 1, L.p, L.M, L.M))
        for g, (c, k) in enumerate(L.groups):
            blocks[c, k] = coef[L.columns(g)].T
        return cls(layout, blocks)

    @classmethod
    def zeros(cls, layout: GroupLayout) -> "CoefficientBlocks":
        return cls(layout, np.zeros((layout.q + 1, layout.p, layout.M, layout.M)))


@dataclass
class AdmmReport:
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    converged: bool
    lam: float = float("nan")
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("iterations", "primal_residual", "dual_residual", "objective", "converged", "lam")}


def build_design(scores, X, target: int) -> tuple[DesignMatrix, np.ndarray]:
    """Assemble ``Z = A * X`` and the response for ``target``.

    ``scores`` is a ScoreTensor or an (n, p, M) array computed with the
    target's basis; ``X`` is a CovariateDesign or an (n, q+1) array whose
    first column is the intercept.
    """
    S = getattr(scores, "scores", scores)
    Xm = getattr(X, "matrix", X)
    S = np.asarray(S, dtype=float)
    Xm = np.asarray(Xm, dtype=float)
    if S.ndim != 3:
        raise DimensionError(f"scores must be (n, p, M), got {S.shape}")
    n, p, M = S.shape
    if Xm.ndim != 2 or Xm.shape[0] != n:
        raise DimensionError(f"covariate design {Xm.shape} does not match {n} samples")
    if not 0 <= target < p:
        raise DimensionError(f"target {target} outside 0..{p - 1}")
    layout = GroupLayout(target, p, Xm.shape[1] - 1, M)
    others = S[:, layout.others, :].reshape(n, (p - 1) * M)
    Z = np.concatenate([Xm[:, [c]] * others for c in range(Xm.shape[1])], axis=1)
    return DesignMatrix(Z, layout), S[:, target, :].copy()


def _group_norms(coef: np.ndarray, M: int) -> np.ndarray:
    G = coef.shape[0] // M
    return np.sqrt(np.sum(coef.reshape(G, M, -1) ** 2, axis=(1, 2)))


def lambda_max(Z, A, M: int | None = None) -> float:
    """Smallest penalty at which the all-zero coefficient is optimal."""
    Z = getattr(Z, "Z", Z)
    A = np.asarray(A, dtype=float)
    M = A.shape[1] if M is None else M
    if not np.any(A):
        raise DegenerateError("response is identically zero")
    n = Z.shape[0]
    return float(_group_norms(Z.T @ A, M).max() / n)


def block_soft_threshold(V: np.ndarray, kappa: float) -> np.ndarray:
    """Shrink ``V`` towards zero by ``kappa`` in Frobenius norm."""
    norm = np.linalg.norm(V)
    if norm <= kappa:
        return np.zeros_like(V)
    return (1.0 - kappa / norm) * V


def _group_soft_threshold(V: np.ndarray, kappa: float, M: int) -> np.ndarray:
    G = V.shape[0] // M
    R = V.reshape(G, M, -1)
    norms = np.sqrt(np.sum(R**2, axis=(1, 2)))
    scale = np.zeros_like(norms)
    keep = norms > kappa
    scale[keep] = 1.0 - kappa / norms[keep]
    return (R * scale[:, None, None]).reshape(V.shape)


def group_lasso_objective(Z, A, coef, lam: float, M: int) -> float:
    n = Z.shape[0]
    r = A - Z @ coef
    return float(np.sum(r * r) / (2 * n) + lam * _group_norms(coef, M).sum())


class GroupLassoADMM:
    """ADMM for the group lasso with the consensus split ``P = Q``.

    The Cholesky factor of ``Z^T Z / n + rho I`` is computed once and reused
    for every penalty value, which makes warm-started path fits cheap. When
    the design has more columns than rows the n x n matrix
    ``Z Z^T + n rho I`` is factored instead (Woodbury identity).
    """

    def __init__(self, Z, A, M: int | None = None, rho: float = DEFAULT_RHO):
        self.Z = np.asarray(getattr(Z, "Z", Z), dtype=float)
        self.A = np.asarray(A, dtype=float)
        if self.Z.shape[0] != self.A.shape[0]:
            raise DimensionError(f"design has {self.Z.shape[0]} rows, response {self.A.shape[0]}")
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.M = self.A.shape[1] if M is None else M
        if self.Z.shape[1] % self.M:
            raise DimensionError(f"{self.Z.shape[1]} design columns are not a multiple of M={self.M}")
        self.n = self.Z.shape[0]
        self.rho = rho
        self.ZtA = self.Z.T @ self.A / self.n
        self._wide = self.Z.shape[1] > self.n
        if self._wide:
            inner = self.Z @ self.Z.T
            inner[np.diag_indices_from(inner)] += self.n * rho
        else:
            inner = self.Z.T @ self.Z / self.n
            inner[np.diag_indices_from(inner)] += rho
        self._factor = cho_factor(inner, lower=True, check_finite=False)
        self._lam_max = float(_group_norms(self.ZtA, self.M).max()) if np.any(self.A) else 0.0

    @property
    def lambda_max(self) -> float:
        if self._lam_max == 0.0:
            raise DegenerateError("response is identically zero")
        return self._lam_max

    def objective(self, coef: np.ndarray, lam: float) -> float:
        return group_lasso_objective(self.Z, self.A, coef, lam, self.M)

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``(Z^T Z / n + rho I)^-1``."""
        if not self._wide:
            return cho_solve(self._factor, rhs, check_finite=False)
        t = cho_solve(self._factor, self.Z @ rhs, check_finite=False)
        return (rhs - self.Z.T @ t) / self.rho

    def fit(self, lam: float, *, tol_abs: float = DEFAULT_TOL_ABS, tol_rel: float = DEFAULT_TOL_REL,
            max_iter: int = DEFAULT_MAX_ITER, warm: tuple[np.ndarray, np.ndarray] | None = None,
            track: bool = False) -> tuple[np.ndarray, AdmmReport, tuple[np.ndarray, np.ndarray]]:
        """Solve at penalty ``lam``.

        Returns the thresholded iterate ``P`` (exact zeros in inactive
        blocks), a report, and the ``(P, U)`` state for warm starts.
        """
        if lam < 0:
            raise ValueError("lam must be >= 0")
        shape = self.ZtA.shape
        if lam >= self._lam_max:
            zero = np.zeros(shape)
            rep = AdmmReport(0, 0.0, 0.0, self.objective(zero, lam), True, lam)
            return zero, rep, (zero, self.ZtA / self.rho)
        rho = self.rho
        kappa = lam / rho
        if warm is None:
            P = np.zeros(shape)
            U = np.zeros(shape)
        else:
            P, U = warm[0].copy(), warm[1].copy()
        sqrt_d = np.sqrt(P.size)
        history: list[float] = []
        converged = False
        r_norm = s_norm = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            Q = self._solve(self.ZtA + rho * (P - U))
            P_old = P
            P = _group_soft_threshold(Q + U, kappa, self.M)
            U = U + Q - P
            r_norm = np.linalg.norm(Q - P)
            s_norm = rho * np.linalg.norm(P - P_old)
            if not np.isfinite(r_norm) or not np.isfinite(s_norm):
                raise NumericalError(f"ADMM diverged at iteration {it} (lam={lam})")
            if track:
                history.append(self.objective(P, lam))
            eps_pri = sqrt_d * tol_abs + tol_rel * max(np.linalg.norm(Q), np.linalg.norm(P))
            eps_dual = sqrt_d * tol_abs + tol_rel * rho * np.linalg.norm(U)
            if r_norm <= eps_pri and s_norm <= eps_dual:
                converged = True
                break
        rep = AdmmReport(it, float(r_norm), float(s_norm), self.objective(P, lam), converged, lam, history)
        return P, rep, (P, U)


def admm_group_lasso(Z, A, lam: float, rho: float = DEFAULT_RHO, tol_abs: float = DEFAULT_TOL_ABS,
                     tol_rel: float = DEFAULT_TOL_REL, max_iter: int = DEFAULT_MAX_ITER,
                     layout: GroupLayout | None = None) -> tuple[CoefficientBlocks | np.ndarray, AdmmReport]:
    """One-shot group-lasso fit.

    Returns :class:`CoefficientBlocks` when ``Z`` is a DesignMatrix (or a
    layout is given), otherwise the stacked coefficient matrix.
    """
    layout = layout or getattr(Z, "layout", None)
    solver = GroupLassoADMM(Z, A, rho=rho)
    coef, rep, _ = solver.fit(lam, tol_abs=tol_abs, tol_rel=tol_rel, max_iter=max_iter)
    if layout is None:
        return coef, rep
    return CoefficientBlocks.from_stacked(coef, layout), rep


def kkt_residuals(Z, A, coef: np.ndarray, lam: float, M: int) -> tuple[float, float]:
    """Worst KKT violation over zero blocks and over nonzero blocks.

    Zero blocks need ``||Z_g^T r||/n <= lam``; the returned value is the
    excess over ``lam``. Nonzero blocks need ``Z_g^T r / n = lam B_g/||B_g||``.
    """
    Z = getattr(Z, "Z", Z)
    n = Z.shape[0]
    grad = Z.T @ (A - Z @ coef) / n
    G = coef.shape[0] // M
    gb = grad.reshape(G, M, -1)
    cb = coef.reshape(G, M, -1)
    norms = np.sqrt(np.sum(cb**2, axis=(1, 2)))
    zero = norms == 0
    worst_zero = 0.0
    if zero.any():
        worst_zero = float(max(0.0, np.sqrt(np.sum(gb[zero] ** 2, axis=(1, 2))).max() - lam))
    worst_nz = 0.0
    if (~zero).any():
        diff = gb[~zero] - lam * cb[~zero] / norms[~zero][:, None, None]
        worst_nz = float(np.sqrt(np.sum(diff**2, axis=(1, 2))).max())
    return worst_zero, worst_nz


class RestrictedLeastSquares:
    """Unpenalized least squares on a subset of groups.

    Gram blocks are formed per active set, so the cost tracks the number of
    selected columns rather than the full design width.
    """

    def __init__(self, Z, A, M: int, ridge: float = RIDGE):
        self.Z = np.asarray(getattr(Z, "Z", Z), dtype=float)
        self.A = np.asarray(A, dtype=float)
        self.M = M
        self.ridge = ridge
        self.n = self.Z.shape[0]
        self.ZtA = self.Z.T @ self.A / self.n

    def solve(self, active_groups) -> tuple[np.ndarray, dict]:
        """Stacked coefficients (inactive rows zero) and diagnostics."""
        groups = sorted(set(int(g) for g in active_groups))
        coef = np.zeros(self.ZtA.shape)
        info = {"active_groups": len(groups), "ridge": 0.0}
        if not groups:
            return coef, info
        cols = np.concatenate([np.arange(g * self.M, (g + 1) * self.M) for g in groups])
        Zs = self.Z[:, cols]
        G = Zs.T @ Zs / self.n
        b = self.ZtA[cols]
        sol = None
        if cols.size <= self.n:
            try:
                fac = cho_factor(G, lower=True, check_finite=False)
                d = np.abs(np.diag(fac[0]))
                if d.min() > 1e-7 * d.max():
                    sol = cho_solve(fac, b, check_finite=False)
            except np.linalg.LinAlgError:
                sol = None
        if sol is None:
            info["ridge"] = self.ridge
            Gr = G.copy()
            Gr[np.diag_indices_from(Gr)] += self.ridge
            try:
                sol = cho_solve(cho_factor(Gr, lower=True, check_finite=False), b, check_finite=False)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(Gr, b, rcond=None)[0]
        coef[cols] = sol
        return coef, info


def restricted_least_squares(Z, A, active_groups, M: int | None = None,
                             layout: GroupLayout | None = None) -> tuple[CoefficientBlocks | np.ndarray, dict]:
    """Least-squares refit using only the columns of ``active_groups``."""
    layout = layout or getattr(Z, "layout", None)
    M = M or (layout.M if layout else np.asarray(A).shape[1])
    coef, info = RestrictedLeastSquares(Z, A, M).solve(active_groups)
    if layout is None:
        return coef, info
    return CoefficientBlocks.from_stacked(coef, layout), info
