"""Brute-force ground truth from full dense diagonalization."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, ValidationError
from .linalg import dag, is_hermitian, opnorm, outer

DEGENERACY_GAP = 1e-9


def fix_phase(v):
    """Make the largest-magnitude component real and positive (first one on ties)."""
    mag = np.abs(v)
    k = int(np.flatnonzero(mag >= mag.max() * (1 - 1e-9))[0])
    return v * (np.conj(v[k]) / mag[k])


@dataclass
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    matching: dict = field(default_factory=dict)
    clusters: list = field(default_factory=list)
    ambiguous: dict = field(default_factory=dict)

    def index(self, nu):
        if nu in self.ambiguous:
            raise DegeneracyError(nu, self.ambiguous[nu])
        return self.matching[nu]

    def eigenvalue(self, nu):
        return float(self.eigenvalues[self.index(nu)])

    def vector(self, nu):
        return self.eigenvectors[:, self.index(nu)]

    def reconstruction_error(self, H):
        V, w = self.eigenvectors, self.eigenvalues
        return opnorm(H - (V * w) @ dag(V))


def _clusters(w, gap):
    groups, current = [], [0]
    for i in range(1, len(w)):
        if w[i] - w[i - 1] < gap:
            current.append(i)
        else:
            groups.append(current)
            current = [i]
    groups.append(current)
    return groups


def exact_eigensystem(H, basis=None, gap=DEGENERACY_GAP, hermitian_tol=1e-10):
    """Diagonalize H (ascending eigenvalues, fixed phases) and match eigenvectors to labels.

    Within a degenerate cluster the eigenvectors are re-chosen as the
    orthonormalized projections of the best-overlapping unperturbed vectors,
    so labels stay well defined when exact degeneracies are symmetry-driven.
    """
    H = np.asarray(H)
    if not is_hermitian(H, hermitian_tol * max(1.0, np.max(np.abs(H), initial=0.0))):
        raise ValidationError("oracle needs a Hermitian matrix")
    H = (H + dag(H)) / 2
    w, V = np.linalg.eigh(H)
    V = V.astype(complex)
    clusters = _clusters(w, gap)
    system = EigenSystem(w, V, clusters=clusters)
    if basis is None:
        for i in range(V.shape[1]):
            V[:, i] = fix_phase(V[:, i])
        return system

    phi = basis.vectors
    overlap = np.abs(dag(V) @ phi) ** 2
    cluster_of = np.empty(len(w), dtype=int)
    for c, members in enumerate(clusters):
        cluster_of[members] = c
    weight = np.zeros((len(clusters), phi.shape[1]))
    np.add.at(weight, cluster_of, overlap)
    assigned = np.argmax(weight, axis=0)

    for c, members in enumerate(clusters):
        labels_here = np.flatnonzero(assigned == c)
        names = [basis.labels[i] for i in labels_here]
        if len(labels_here) != len(members) or np.any(weight[c, labels_here] <= 0.5):
            for nu in names:
                system.ambiguous[nu] = names
            # still record a best-effort matching for reporting
            for i, lab in zip(members, labels_here):
                system.matching[basis.labels[lab]] = i
            continue
        W = V[:, members]
        if len(members) > 1:
            X = W @ (dag(W) @ phi[:, labels_here])
            s, U = np.linalg.eigh(dag(X) @ X)
            X = X @ (U * s**-0.5) @ dag(U)
            V[:, members] = X
        for i, lab in zip(members, labels_here):
            V[:, i] = fix_phase(V[:, i])
            system.matching[basis.labels[lab]] = i
    return system


@dataclass(frozen=True)
class ExactProjector:
    """Spectral projector of the matched eigenvector and its oblique reassembly."""

    spectral: np.ndarray
    oblique: np.ndarray
    C: np.ndarray
    D: np.ndarray
    eigenvalue: float


def exact_projector(H, nu, basis, eig=None):
    """Ground-truth Pi_nu for label ``nu``.

    The creation/destruction operators here come straight from the matched
    eigenvector (C = Q|v><phi| / <phi|v>), not from any resolvent.
    """
    eig = eig if eig is not None else exact_eigensystem(H, basis)
    v = eig.vector(nu)
    phi = basis.vector(nu)
    c = np.vdot(phi, v)
    qv = v - phi * c
    C = outer(qv, phi) / c
    D = outer(phi, qv) / np.conj(c)
    P = outer(phi)
    norm = 1 + np.vdot(phi, D @ C @ phi)
    oblique = (P + C) @ (P + D) / norm
    return ExactProjector(outer(v), oblique, C, D, eig.eigenvalue(nu))


def exact_propagate(H, state, t, density=None):
    """Apply exp(-iHt) to a ket, or conjugate a density matrix with it.

    ``density`` defaults to "state is a square matrix".
    """
    state = np.asarray(state, dtype=complex)
    w, V = np.linalg.eigh((H + dag(H)) / 2)
    U = (V * np.exp(-1j * w * t)) @ dag(V)
    if density is None:
        density = state.ndim == 2
    return U @ state @ dag(U) if density else U @ state
