"""Dense-matrix helpers shared by every module.

Operators are plain complex ``numpy`` arrays; the predicates here are the
checks the rest of the package (and its tests) lean on.
"""

from dataclasses import dataclass, field

import numpy as np


def dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def opnorm(a):
    """Spectral (operator 2-) norm."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def is_hermitian(a, tol=1e-12):
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dag(a)), initial=0.0) <= tol


def is_unitary(a, tol=1e-12):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    eye = np.eye(a.shape[0])
    return np.max(np.abs(dag(a) @ a - eye)) <= tol and np.max(np.abs(a @ dag(a) - eye)) <= tol


def is_projector(a, tol=1e-12, hermitian=True):
    """Idempotent (and, by default, Hermitian) within ``tol``."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if np.max(np.abs(a @ a - a)) > tol:
        return False
    return is_hermitian(a, tol) if hermitian else True


def outer(ket, bra=None):
    ket = np.asarray(ket)
    bra = ket if bra is None else np.asarray(bra)
    return np.outer(ket, np.conj(bra))


def partial_trace_bath(op, dim_s, dim_b):
    """Trace out the bath factor of an operator on ``system (x) bath``."""
    return np.trace(np.asarray(op).reshape(dim_s, dim_b, dim_s, dim_b), axis1=1, axis2=3)


def wrap_angle(x):
    """Map angles onto (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalue/projector pairs.

    ``labels`` is optional and parallel to ``terms``.
    """

    terms: tuple
    labels: tuple = field(default=())

    @property
    def eigenvalues(self):
        return np.array([ev for ev, _ in self.terms])

    @property
    def projectors(self):
        return [p for _, p in self.terms]

    def operator(self):
        return sum(ev * p for ev, p in self.terms)

    def orthogonality_defect(self):
        """max_{nu != mu} ||P_nu P_mu||."""
        ps = self.projectors
        worst = 0.0
        for i in range(len(ps)):
            for j in range(len(ps)):
                if i != j:
                    worst = max(worst, opnorm(ps[i] @ ps[j]))
        return worst

    def completeness_defect(self):
        total = sum(self.projectors)
        return opnorm(total - np.eye(total.shape[0]))

    def is_valid(self, tol=1e-12, complete=True):
        ok = self.orthogonality_defect() <= tol
        return ok and (self.completeness_defect() <= tol if complete else True)
