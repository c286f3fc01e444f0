"""Ridge regression and L2-penalised logistic regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float
    l2_lambda: float
    kind: str  # "ridge" | "logistic"
    n_iter: int = 0

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.intercept

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        if self.kind == "logistic":
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        return z

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": self.weights.tolist(),
                "intercept": self.intercept, "l2_lambda": self.l2_lambda, "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), d["intercept"],
                   d["l2_lambda"], d["kind"], d.get("n_iter", 0))


def ridge_fit(X, y, lam: float = 1.0, sample_weight=None) -> LinearModel:
    """Minimise ``sum w_i (x_i.w + b - y_i)^2 + lam |w|^2``; the intercept is not penalised.

    Solved exactly on weighted-centred normal equations.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) < 1 or len(X) != len(y):
        raise ValueError("ridge_fit needs a 2-D X with at least one row and len(X) == len(y)")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    W = sw.sum()
    x_mean = sw @ X / W
    y_mean = float(sw @ y / W)
    Xc = X - x_mean
    A = Xc.T @ (sw[:, None] * Xc) + lam * np.eye(X.shape[1])
    rhs = Xc.T @ (sw * (y - y_mean))
    if lam == 0:
        rank = np.linalg.matrix_rank(A)
        if rank < A.shape[0]:
            raise np.linalg.LinAlgError(
                "ridge normal equations are singular at lambda = 0; use lambda > 0")
    w = np.linalg.solve(A, rhs)
    return LinearModel(w, y_mean - float(x_mean @ w), float(lam), "ridge")


def _objective(X, y, w, b, lam):
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))


def logistic_fit(X, y, l2_lambda: float = 1.0, max_iter: int = 100,
                 tol: float = 1e-8) -> LinearModel:
    """Newton iterations with step halving on the penalised negative log-likelihood

        sum log(1 + exp(z_i)) - y_i z_i  +  lambda/2 |w|^2,   z = Xw + b

    from the zero start. Stops once the gradient norm falls below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("logistic_fit needs 0/1 labels")
    if y.min() == y.max():
        raise ValueError("logistic_fit needs both classes present")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    pen = np.full(d + 1, float(l2_lambda))
    pen[-1] = 0.0
    beta = np.zeros(d + 1)
    obj = _objective(X, y, beta[:-1], beta[-1], l2_lambda)
    it = 0
    for it in range(1, max_iter + 1):
        z = Xa @ beta
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = Xa.T @ (p - y) + pen * beta
        if np.linalg.norm(grad) < tol:
            it -= 1
            break
        H = Xa.T @ (Xa * (p * (1 - p))[:, None]) + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-10
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = beta - t * step
            new_obj = _objective(X, y, cand[:-1], cand[-1], l2_lambda)
            if new_obj <= obj or t < 1e-10:
                break
            t *= 0.5
        if new_obj > obj:
            break
        beta, obj = cand, new_obj
    return LinearModel(beta[:-1].copy(), float(beta[-1]), float(l2_lambda), "logistic", it)
