"""Subdynamics pipeline: creation/destruction operators, Pi_nu, the
intermediate operator, energy shifts and projected-state propagation.

Every operator is a dense matrix in the composite product basis. ``V`` below
is the full perturbation ``lam * H_int``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBlockError, InvalidStateError, NormalizationError, SingularResolventError, ValidationError
from .linalg import SpectralDecomposition, dag, is_hermitian, outer, partial_trace_bath
from .model import Order, build_hamiltonians, split_by_basis, unperturbed_basis
from .oracle import exact_eigensystem

PINV_RCOND = 1e-10
DEGENERATE_REL = 1e-9
IMAG_WARN = 1e-8
RANK_CUTOFF = 1e-13


def _order(mode):
    return Order(mode.value if isinstance(mode, Order) else str(mode).lower())


def degenerate_partner(e_nu, e_mu):
    return abs(e_nu - e_mu) < DEGENERATE_REL * max(1.0, abs(e_nu))


@dataclass(frozen=True)
class SubdynSet:
    nu: tuple
    phi: np.ndarray
    P: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Pi: np.ndarray
    delta_E: complex
    E0: float
    order: Order

    def support_defect(self):
        """max(||C - QCP||, ||D - PDQ||)."""
        Q = np.eye(len(self.phi)) - self.P
        return max(np.max(np.abs(self.C - Q @ self.C @ self.P)), np.max(np.abs(self.D - self.P @ self.D @ Q)))


def _perturbation(hams):
    return hams.lam * hams.H_int


def _q_space_resolvent(H, basis, i, energy, nu):
    """Spectral data of pinv(E - QHQ) restricted to the complement of phi_i.

    Returns ``(phi_q, W, inv)`` with ``pinv = phi_q W diag(inv) W^+ phi_q^+``
    and a checker for right-hand sides along dropped directions.
    """
    keep = np.arange(basis.dim) != i
    phi_q = basis.vectors[:, keep]
    h_q = dag(phi_q) @ H @ phi_q
    e, W = np.linalg.eigh((h_q + dag(h_q)) / 2)
    d = energy - e
    dropped = np.abs(d) <= PINV_RCOND * max(np.max(np.abs(d)), 1e-300)
    inv = np.where(dropped, 0.0, 1.0 / np.where(dropped, 1.0, d))

    def check(coeffs, scale):
        if np.any(dropped) and np.max(np.abs(coeffs[dropped])) > PINV_RCOND * max(1.0, scale):
            raise SingularResolventError(nu, float(np.min(np.abs(d))))

    return phi_q, W, inv, check


def creation_operator(hams, basis, nu, mode=Order.EXACT, energy=None):
    """C_nu = Q_nu C P_nu.

    Exact: ``pinv(E_nu Q - Q H Q) Q V P`` with ``E_nu`` the matched exact
    eigenvalue (pass ``energy`` or let the oracle supply it).
    Order1: first-order coefficients, degenerate partners divided by the
    self-consistent shift instead of the vanishing energy difference.
    """
    mode = _order(mode)
    i = basis.index(nu)
    phi = basis.vectors[:, i]
    V = _perturbation(hams)
    if mode is Order.EXACT:
        if energy is None:
            energy = exact_eigensystem(hams.H, basis).eigenvalue(basis.labels[i])
        phi_q, W, inv, check = _q_space_resolvent(hams.H, basis, i, energy, basis.labels[i])
        b = dag(W) @ (dag(phi_q) @ (V @ phi))
        check(b, np.linalg.norm(b))
        return outer(phi_q @ (W @ (inv * b)), phi)
    coef, _ = _first_order_coefficients(basis.to_basis(V), basis.energies, i, basis.labels[i])
    return outer(basis.vectors @ coef, phi)


def destruction_operator(hams, basis, nu, mode=Order.EXACT, energy=None):
    """D_nu = P_nu V Q_nu pinv(E_nu - Q H Q); Order1 mirrors ``creation_operator``."""
    mode = _order(mode)
    i = basis.index(nu)
    phi = basis.vectors[:, i]
    V = _perturbation(hams)
    if mode is Order.EXACT:
        if energy is None:
            energy = exact_eigensystem(hams.H, basis).eigenvalue(basis.labels[i])
        phi_q, W, inv, check = _q_space_resolvent(hams.H, basis, i, energy, basis.labels[i])
        r = ((np.conj(phi) @ V) @ phi_q) @ W
        check(r, np.linalg.norm(r))
        return np.outer(phi, ((r * inv) @ dag(W)) @ dag(phi_q))
    _, row = _first_order_coefficients(basis.to_basis(V), basis.energies, i, basis.labels[i])
    return np.outer(phi, row @ dag(basis.vectors))


def _first_order_coefficients(v, e0, i, nu):
    """Column of C^[1] and row of D^[1] in label coordinates."""
    n = len(e0)
    others = np.arange(n) != i
    coupled = others & (np.abs(v[:, i]) + np.abs(v[i, :]) > 0)
    deg = np.array([degenerate_partner(e0[i], e0[m]) for m in range(n)]) & coupled
    nondeg = coupled & ~deg
    coef = np.zeros(n, dtype=complex)
    row = np.zeros(n, dtype=complex)
    coef[nondeg] = v[nondeg, i] / (e0[i] - e0[nondeg])
    row[nondeg] = v[i, nondeg] / (e0[i] - e0[nondeg])
    if np.any(deg):
        shift = self_consistent_shift_from(v, e0, i)
        if not shift > 0:
            raise DegenerateBlockError(nu)
        coef[deg] = v[deg, i] / shift
        row[deg] = -v[i, deg] / shift
    return coef, row


def self_consistent_shift_from(v, e0, i):
    """sqrt(sum over degenerate partners of |V_{mu nu}|^2), in label coordinates."""
    partners = [m for m in range(len(e0)) if m != i and degenerate_partner(e0[i], e0[m])]
    return float(np.sqrt(np.sum(np.abs(v[partners, i]) ** 2))) if partners else 0.0


def self_consistent_shift(hams, basis, nu):
    """Second-order shift obtained by putting the shift itself in the degenerate denominators.

    Zero whenever the perturbation does not couple nu to any state of equal
    unperturbed energy (in particular for j = 3, 4 under dephasing).
    """
    return self_consistent_shift_from(basis.to_basis(_perturbation(hams)), basis.energies, basis.index(nu))


def energy_shift(hams, basis, nu, C, mode=Order.EXACT):
    """Delta E_nu = <phi_nu| V (P_nu + C_nu) |phi_nu> (the diagonal term vanishes for both couplings).

    With Order1 ``C`` this is the second-order shift.
    """
    phi = basis.vector(nu)
    V = _perturbation(hams)
    shift = np.vdot(phi, V @ phi) + np.vdot(phi, V @ (C @ phi))
    if _order(mode) is Order.EXACT and abs(shift.imag) > IMAG_WARN:
        warnings.warn(f"energy shift at nu={nu} has imaginary part {shift.imag:.3g}", RuntimeWarning, stacklevel=2)
    return complex(shift)


def pi_projector(P, C, D, nu=None):
    """(P + C)(P + DC)^-1 (P + D) with the inverse taken on the rank-1 P block."""
    norm = 1 + np.trace(D @ C)
    if abs(norm) < 1e-12:
        raise NormalizationError(nu, abs(norm))
    return (P + C) @ (P + D) / norm


def subdyn_set(hams, basis, nu, mode=Order.EXACT, eig=None):
    mode = _order(mode)
    nu = basis.labels[basis.index(nu)]
    energy = None
    if mode is Order.EXACT:
        eig = eig if eig is not None else exact_eigensystem(hams.H, basis)
        energy = eig.eigenvalue(nu)
    C = creation_operator(hams, basis, nu, mode, energy)
    D = destruction_operator(hams, basis, nu, mode, energy)
    P = basis.projector(nu)
    return SubdynSet(
        nu=nu,
        phi=basis.vector(nu),
        P=P,
        C=C,
        D=D,
        Pi=pi_projector(P, C, D, nu),
        delta_E=energy_shift(hams, basis, nu, C, mode),
        E0=float(basis.energies[basis.index(nu)]),
        order=mode,
    )


def subdyn_sets(hams, basis, mode=Order.EXACT, eig=None):
    """SubdynSet for every label (one oracle diagonalization shared in exact mode)."""
    mode = _order(mode)
    if mode is Order.EXACT and eig is None:
        eig = exact_eigensystem(hams.H, basis)
    return tuple(subdyn_set(hams, basis, nu, mode, eig) for nu in basis.labels)


@dataclass(frozen=True)
class IntermediateOperator:
    """Theta restricted to the projected subspace plus the raw H0 + H1 C it comes from."""

    decomposition: SpectralDecomposition
    raw: np.ndarray

    @property
    def energies(self):
        return self.decomposition.eigenvalues

    @property
    def labels(self):
        return self.decomposition.labels

    def matrix(self):
        return self.decomposition.operator()

    def projected_block(self):
        """sum_nu P_nu (H0 + H1 C) P_nu, the generator that acts on projected states."""
        return sum(p @ self.raw @ p for p in self.decomposition.projectors)

    def leakage(self):
        """Norm of the off-projector part of the raw operator."""
        from .linalg import opnorm

        return opnorm(self.raw - self.projected_block())


def intermediate_operator(hams, basis, sets):
    """Spectral form {(E0_nu + dE_nu, P_nu)} and the raw operator H0 + H1 sum_nu C_nu."""
    H0, H1 = split_by_basis(hams.H, basis)
    C = sum(s.C for s in sets)
    terms = tuple((s.E0 + s.delta_E, s.P) for s in sets)
    return IntermediateOperator(SpectralDecomposition(terms, tuple(s.nu for s in sets)), H0 + H1 @ C)


@dataclass(frozen=True)
class ProjectedState:
    """Amplitudes (ket) or a density matrix in the phi_nu label basis."""

    labels: tuple
    amplitudes: np.ndarray | None = None
    rho: np.ndarray | None = None

    @property
    def is_density(self):
        return self.rho is not None

    def norm(self):
        return float(np.linalg.norm(self.amplitudes)) if not self.is_density else float(np.trace(self.rho).real)


def _scalar_norm(s):
    value = 1 + np.vdot(s.phi, s.D @ (s.C @ s.phi))
    if abs(value) < 1e-12:
        raise NormalizationError(s.nu, abs(value))
    return value


def project_state(psi, sets, tol=1e-10):
    """c_nu = (1 + <phi|DC|phi>)^-1 <phi_nu| (P_nu + D_nu) |psi>."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1) > tol:
        raise ValidationError("project_state expects a normalized ket")
    amps = np.array([(np.vdot(s.phi, psi) + np.vdot(s.phi, s.D @ psi)) / _scalar_norm(s) for s in sets])
    return ProjectedState(tuple(s.nu for s in sets), amplitudes=amps)


def project_density(rho, sets):
    """Density analogue of ``project_state``: rho^proj_{nu mu} from both sides."""
    rho = np.asarray(rho, dtype=complex)
    left = np.array([(np.conj(s.phi) @ (s.P + s.D)) / _scalar_norm(s) for s in sets])
    return ProjectedState(tuple(s.nu for s in sets), rho=left @ rho @ dag(left))


def reconstruct(state, sets):
    """psi = sum_nu (P_nu + C_nu) c_nu phi_nu."""
    return sum(c * (s.phi + s.C @ s.phi) for c, s in zip(state.amplitudes, sets))


def propagate_projected(state, theta, t):
    """Accumulate exp(-i (E0 + dE) t) on every projected component."""
    if t < 0:
        raise ValidationError("propagation time must be non-negative")
    decomposition = theta.decomposition if isinstance(theta, IntermediateOperator) else theta
    phases = np.exp(-1j * decomposition.eigenvalues * t)
    if state.is_density:
        return ProjectedState(state.labels, rho=phases[:, None] * state.rho * np.conj(phases)[None, :])
    return ProjectedState(state.labels, amplitudes=phases * state.amplitudes)


def propagate_segments(state, segments):
    """Time-ordered product over piecewise-constant pieces ``[(theta, duration), ...]``."""
    for theta, duration in segments:
        state = propagate_projected(state, theta, duration)
    return state


@dataclass(frozen=True)
class ReducedProjection:
    rho_s: np.ndarray
    trace: complex
    warning: str | None


def reduced_projected_density(rho, sets, dim_s=4):
    """Tr_B sum_nu P_nu Pi_nu rho.

    The result is not guaranteed to be a density matrix; a non-positive or
    complex trace is flagged in ``warning`` instead of raising.
    """
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    M = sum(s.P @ s.Pi for s in sets)
    rho_s = partial_trace_bath(M @ rho, dim_s, dim // dim_s)
    tr = complex(np.trace(rho_s))
    warning = None
    if tr.real <= 0 or abs(tr.imag) > 1e-10:
        warning = f"projected trace {tr.real:.6g}{tr.imag:+.3g}j is not positive real"
    return ReducedProjection(rho_s, tr, warning)


def _as_density(x):
    x = np.asarray(x, dtype=complex)
    return outer(x) if x.ndim == 1 else x


def _psd_sqrt(rho, tol):
    if not is_hermitian(rho, 1e-9):
        raise InvalidStateError(float("nan"))
    w, V = np.linalg.eigh((rho + dag(rho)) / 2)
    if w.min() < -tol:
        raise InvalidStateError(float(w.min()))
    # eigenvalues at round-off level would otherwise contribute sqrt(eps) ~ 1e-8
    w = np.where(w > RANK_CUTOFF * max(w.max(), 0.0), w, 0.0)
    return (V * np.sqrt(w)) @ dag(V)


def fidelity(rho0, rho_t, tol=1e-9):
    """Tr sqrt(sqrt(rho0) rho_t sqrt(rho0)), evaluated as the trace norm of sqrt(rho0) sqrt(rho_t).

    Kets are accepted and turned into projectors. Eigenvalues down to -tol are
    clamped to zero.
    """
    a, b = _as_density(rho0), _as_density(rho_t)
    return float(np.sum(np.linalg.svd(_psd_sqrt(a, tol) @ _psd_sqrt(b, tol), compute_uv=False)))


@dataclass(frozen=True)
class Pipeline:
    """Everything computed for one configuration at one time."""

    config: object
    hams: object
    basis: object
    eig: object
    sets: tuple
    theta: IntermediateOperator


def run_pipeline(config, mode=Order.EXACT, t=0.0):
    hams = build_hamiltonians(config, t)
    basis = unperturbed_basis(config, t)
    mode = _order(mode)
    eig = exact_eigensystem(hams.H, basis)
    sets = subdyn_sets(hams, basis, mode, eig if mode is Order.EXACT else None)
    return Pipeline(config, hams, basis, eig, sets, intermediate_operator(hams, basis, sets))
