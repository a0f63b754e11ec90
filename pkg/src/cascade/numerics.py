"""Dense linear algebra and optimization primitives.

Factorizations are delegated to LAPACK through numpy and wrapped with the
contracts the rest of the package relies on: descending spectra, a fixed
eigenvector/singular-vector sign convention (largest-magnitude entry
positive) so repeated fits are bit-identical, and explicit errors for shape
or conditioning problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, SingularMatrixError


def require_finite(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} contains NaN or Inf entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with shape and finiteness checks."""
    a = require_finite(a, "left operand")
    b = require_finite(b, "right operand")
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def _fix_column_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    lead = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending."""
    s = require_finite(np.asarray(s, dtype=np.float64), "sym_eig input")
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got {s.shape}")
    scale = max(1.0, float(np.abs(s).max()))
    if np.abs(s - s.T).max() > 1e-10 * scale:
        raise ContractError("sym_eig input is not symmetric within 1e-10 relative")
    eigvals, eigvecs = np.linalg.eigh(s)
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], _fix_column_signs(eigvecs[:, order])


def inv_sqrt_sym(s: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """(s + ridge*I)^(-1/2) for symmetric positive semidefinite s."""
    if ridge < 0:
        raise ContractError(f"ridge must be >= 0, got {ridge}")
    eigvals, eigvecs = sym_eig(s)
    shifted = eigvals + ridge
    if shifted.min() <= 1e-12:
        raise SingularMatrixError(
            f"matrix is singular (smallest shifted eigenvalue {shifted.min():.3e}); "
            "increase the ridge regularizer"
        )
    root = eigvecs @ np.diag(shifted ** -0.5) @ eigvecs.T
    return (root + root.T) / 2.0


def svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``m = U @ diag(s) @ V.T`` with descending singular values."""
    m = require_finite(np.asarray(m, dtype=np.float64), "svd input")
    if m.ndim != 2:
        raise DimensionError(f"svd needs a 2-D matrix, got {m.shape}")
    u, sigma, vt = np.linalg.svd(m, full_matrices=False)
    v = vt.T
    lead = np.abs(u).argmax(axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, sigma, v * signs


@dataclass
class AdamState:
    """Adam optimizer state; single-owner mutable, one per training run."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One Adam update with bias correction; mutates params in place."""
    if set(params) != set(grads):
        raise DimensionError(f"param/grad name mismatch: {sorted(set(params) ^ set(grads))}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape} for '{name}'")
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return params


def grad_check(f, point: np.ndarray, analytic_grad: np.ndarray) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    Per coordinate the step is ``1e-5 * max(1, |x_i|)`` and the error is
    ``|g - g_hat| / max(1e-8, |g| + |g_hat|)``.
    """
    point = np.asarray(point, dtype=np.float64)
    analytic_grad = np.asarray(analytic_grad, dtype=np.float64)
    if point.shape != analytic_grad.shape:
        raise DimensionError(f"point shape {point.shape} != gradient shape {analytic_grad.shape}")
    worst = 0.0
    flat = point.ravel()
    grad = analytic_grad.ravel()
    for i in range(flat.size):
        h = 1e-5 * max(1.0, abs(flat[i]))
        x_plus = flat.copy()
        x_plus[i] += h
        x_minus = flat.copy()
        x_minus[i] -= h
        f_plus = float(f(x_plus.reshape(point.shape)))
        f_minus = float(f(x_minus.reshape(point.shape)))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ContractError("function returned a non-finite value during grad_check")
        g_hat = (f_plus - f_minus) / (2.0 * h)
        err = abs(grad[i] - g_hat) / max(1e-8, abs(grad[i]) + abs(g_hat))
        worst = max(worst, err)
    return worst
