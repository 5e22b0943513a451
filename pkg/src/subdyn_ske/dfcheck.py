"""Decoherence-free checks in Hilbert and Liouville space, the bath coupling
constraint, and the 2x2 triangulation of single-mode bath blocks."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    NumericalSingularityError,
    SingularTransformError,
    UnsupportedInputError,
    ValidationError,
)
from .linalg import dag, opnorm, partial_trace_bath
from .model import (
    SPIN_EXCHANGE_EIGENVALUES,
    CouplingKind,
    build_hamiltonians,
    max_dim_from_env,
    system_basis,
    unperturbed_basis,
)
from .subdyn import fidelity

# eigenvalue of sigma_z1 + sigma_z2 on phi_1..phi_4
DEPHASING_CHARGE = (-2.0, 2.0, 0.0, 0.0)


@dataclass
class DFReport:
    residual_hilbert: float | None = None
    residual_bath_constraint: complex | None = None
    residual_liouville: float | None = None
    fidelity: float | None = None
    per_nu: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)


# ---------------------------------------------------------------- Hilbert space


def df_residual(hams, basis, sets):
    """||sum_nu P_nu lam H_int C_nu P_nu|| with a per-label breakdown.

    The operator is diagonal in the unperturbed basis, so its norm is the
    largest |<phi_nu| V C_nu |phi_nu>|. For the dephasing model the report
    also carries the common-denominator form lam^2 * s_j^2 * constraint(g, n)
    next to each exact value.
    """
    V = hams.lam * hams.H_int
    per_nu = {}
    for s in sets:
        per_nu[s.nu] = complex(np.vdot(s.phi, V @ (s.C @ s.phi)))
    report = DFReport(residual_hilbert=max((abs(v) for v in per_nu.values()), default=0.0), per_nu=per_nu)
    return report


def common_denominator_form(lam, g, nu):
    """lam^2 s_j^2 * constraint(g, n): the cross-term pattern that must vanish for the dephasing model."""
    j, occ = nu
    s = DEPHASING_CHARGE[j - 1]
    return lam**2 * s**2 * bath_df_constraint(g, occ)


def bath_df_constraint(g, n):
    """sum_k g_k g*_{k+1} (n_k + 1) + g_{k-1} g*_k n_k with g_0 = g_{K+1} = 0."""
    g = np.asarray(g, dtype=complex)
    n = np.asarray(n, dtype=float)
    if g.shape != n.shape or g.ndim != 1:
        raise ValidationError("couplings and occupations must be 1-d and of equal length")
    padded = np.concatenate(([0], g, [0]))
    right = padded[1:-1] * np.conj(padded[2:]) * (n + 1)
    left = padded[:-2] * np.conj(padded[1:-1]) * n
    return complex(np.sum(right + left))


@dataclass
class RatioCheck:
    residuals: dict
    undefined: list

    @property
    def max_residual(self):
        return max((abs(v) for v in self.residuals.values()), default=0.0)


def bv_ratio_residuals(g, n):
    """Per interior k (0-based 1..K-2): (n_k+1)/n_k + g_{k-1} g*_k / (g_k g*_{k+1}).

    Sites with n_k = 0 or a vanishing denominator are listed in ``undefined``.
    """
    g = np.asarray(g, dtype=complex)
    residuals, undefined = {}, []
    for k in range(1, len(g) - 1):
        den = g[k] * np.conj(g[k + 1])
        if n[k] == 0 or den == 0:
            undefined.append(k)
            continue
        residuals[k] = complex((n[k] + 1) / n[k] + g[k - 1] * np.conj(g[k]) / den)
    return RatioCheck(residuals, undefined)


def construct_bv_couplings(n, g1=1.0, g2=1.0):
    """Real couplings obeying the interior ratio condition: g_{k+1} = -g_{k-1} n_k / (n_k + 1).

    The boundary terms of the full constraint cancel only for compatible
    occupations; callers should evaluate :func:`bath_df_constraint` on the result.
    """
    n = list(n)
    if len(n) < 2:
        raise ValidationError("the ratio condition needs at least two modes")
    g = [float(g1), float(g2)]
    for k in range(1, len(n) - 1):
        if n[k] == 0:
            raise ValidationError(f"ratio condition undefined at k={k} (n_k = 0)")
        g.append(-g[k - 1] * n[k] / (n[k] + 1))
    return g


# ---------------------------------------------------------------- triangulation


@dataclass(frozen=True)
class TriangularBlock:
    omega: float
    g: float
    n: int
    gamma: float
    zeta: float
    T: np.ndarray
    M: np.ndarray
    M_tri: np.ndarray
    zeta_closed_form: float
    completed: bool

    @property
    def right(self):
        """Columns r_1, r_2 of T."""
        return self.T

    @property
    def left(self):
        """Rows l_1, l_2 of T^-1 (dual to the right vectors)."""
        return np.linalg.inv(self.T)


def bath_block(omega, g, n):
    s = math.sqrt(n + 1)
    return np.array([[omega * n, g * s], [g * s, omega * (n + 1)]], dtype=float)


def gamma_roots(omega, g, n):
    """Both roots of g s x^2 + omega x - g s = 0, evaluated without cancellation.

    ``+`` is the positive root and ``-`` the negative one, matching the two
    signs of -omega/(2 g s) +- sqrt((omega/2g)^2/(n+1) + 1).
    """
    s = math.sqrt(n + 1)
    a = omega / (2 * g * s)
    r = math.hypot(a, 1.0)
    if a >= 0:
        minus = -a - r
        plus = -1 / minus
    else:
        plus = -a + r
        minus = -1 / plus
    return plus, minus


def lower_left_numerator(a, c, omega, g, n):
    """det(T) * (T^-1 M T)[1, 0] for T = [[a, b], [c, d]]; independent of b and d."""
    return (a * a - c * c) * g * math.sqrt(n + 1) + a * c * omega


def triangulate_block(omega, g, n, branch="+"):
    """Similarity transform making the single-mode block upper triangular.

    T = [[gamma, -1], [1, -zeta]]. At n = 0 the closed-form zeta makes T
    singular (det = -gamma omega n / (g sqrt(n+1))); the second column is
    then taken orthogonal to the first, which keeps the first column (the
    only one the triangular form depends on) intact.
    """
    if isinstance(g, complex) or np.iscomplexobj(g):
        if complex(g).imag != 0:
            raise UnsupportedInputError("triangulation is defined for real couplings only")
        g = complex(g).real
    g = float(g)
    if int(n) != n or n < 0:
        raise ValidationError(f"occupation must be a non-negative integer, got {n}")
    n = int(n)
    if g == 0:
        raise ValidationError("coupling must be nonzero")
    if omega == 0:
        raise SingularTransformError(0.0, "omega = 0 makes zeta equal gamma")
    if omega < 0:
        raise ValidationError(f"omega must be > 0, got {omega}")
    if branch not in ("+", "-"):
        raise ValidationError("branch must be '+' or '-'")
    plus, minus = gamma_roots(omega, g, n)
    gamma = plus if branch == "+" else minus
    s = math.sqrt(n + 1)
    zeta_cf = (omega * s + gamma * g) / g
    M = bath_block(omega, g, n)
    T = np.array([[gamma, -1.0], [1.0, -zeta_cf]])
    completed = False
    if abs(np.linalg.det(T)) < 1e-12 * np.sum(T**2):
        T = np.array([[gamma, -1.0], [1.0, gamma]])
        completed = True
    det = float(np.linalg.det(T))
    if abs(det) < 1e-12 * np.sum(T**2):
        raise SingularTransformError(det, "transform is not invertible")
    M_tri = np.linalg.solve(T, M @ T)
    if abs(M_tri[1, 0]) > 1e-12 * max(opnorm(M), 1.0):
        raise NumericalSingularityError(f"lower-left entry {M_tri[1, 0]:.3g} not annihilated")
    return TriangularBlock(omega, g, n, gamma, -T[1, 1], T, M, M_tri, zeta_cf, completed)


# ---------------------------------------------------------------- Liouville space


def commutator_superoperator(H):
    """L with vec(H rho - rho H) = L vec(rho) under column stacking."""
    d = H.shape[0]
    eye = np.eye(d)
    return np.kron(eye, H) - np.kron(H.T, eye)


def _vec(rho):
    return rho.reshape(-1, order="F")


def _unvec(v, d):
    return v.reshape((d, d), order="F")


def triangular_right_basis(config, branch="+"):
    """Right vectors phi_j (x) t_{n_1} (x) ... with per-mode triangular 2x2 blocks.

    Only the dephasing model with n_max = 1 factorizes this way: each system
    level j sees every mode as an independent 2x2 block with coupling
    lam * s_j * g_k. Returns ``(R, blocks)``.
    """
    if config.coupling_kind is not CouplingKind.DEPHASING:
        raise UnsupportedInputError("triangular bath blocks need a coupling that commutes with the spin exchange")
    if config.n_max != 1:
        raise UnsupportedInputError("triangular bath blocks need n_max = 1 (2x2 blocks per mode)")
    u = system_basis()
    cols, blocks = [], {}
    for j in range(1, 5):
        factor = np.ones((1, 1))
        for k, m in enumerate(config.modes):
            g_eff = config.lam * DEPHASING_CHARGE[j - 1] * complex(m.g)
            if g_eff == 0:
                t = np.eye(2)
            else:
                if g_eff.imag != 0:
                    raise UnsupportedInputError("triangulation is defined for real couplings only")
                blk = triangulate_block(m.omega, g_eff.real, 0, branch)
                blocks[(j, k)] = blk
                t = blk.T
            factor = np.kron(factor, t)
        cols.append(np.kron(u[:, j - 1 : j], factor))
    return np.hstack(cols), blocks


def _liouville_ordering(d):
    """Liouville index (b, a) (b-major) sorted by (a, -b) so L~ is upper triangular."""
    order = sorted(((b, a) for b in range(d) for a in range(d)), key=lambda ba: (ba[1], -ba[0]))
    return [b * d + a for b, a in order]


def default_system_state():
    """(|01> + |10> - |11> - |00>)/2 as a density matrix."""
    psi = np.array([-0.5, 0.5, 0.5, -0.5], dtype=complex)
    return np.outer(psi, psi.conj())


def liouville_df(config, rho_s=None, t=None, sector=(3, 4), branch="+", tol=1e-10):
    """Liouville-space decoherence-free report on a small instance.

    * ``residual_liouville``: max over Liouville basis elements nu of
      sum_{mu != nu} |L~_{nu mu} L~_{mu nu}| in the triangular basis, the
      second-order coupling product (denominators omitted since the
      Liouville spectrum is degenerate).
    * ``fidelity``: Tr_B of the projected evolution compared with exact
      evolution of the same initial state.
    * ``details``: the untriangulated residual for contrast, L~ lower-part
      norm, subspace and total-space fidelities, and the swap check.
    """
    D = config.dim
    cap = config.max_dim if config.max_dim is not None else max_dim_from_env()
    if D * D > cap:
        raise CapacityError(D * D, cap, "Liouville dimension")
    R, blocks = triangular_right_basis(config, branch)
    hams = build_hamiltonians(config)
    H = hams.H
    L = commutator_superoperator(H)
    Rinv = np.linalg.inv(R)
    S = np.kron(Rinv.T, R)
    order = _liouville_ordering(D)
    L_tri = np.linalg.solve(S, L @ S)[np.ix_(order, order)]

    def coupling_product(Lt):
        off = Lt - np.diag(np.diag(Lt))
        return float(np.max(np.sum(np.abs(off * off.T), axis=1)))

    residual = coupling_product(L_tri)
    U0 = unperturbed_basis(config.with_(lam=0.0)).vectors
    S0 = np.kron(U0.conj(), U0)
    L_plain = dag(S0) @ L @ S0
    plain = coupling_product(L_plain)

    tau = _swap_time(config)
    t = tau if t is None else float(t)
    rho_s = default_system_state() if rho_s is None else np.asarray(rho_s, dtype=complex)
    rho_b = np.zeros((config.dim_b, config.dim_b), dtype=complex)
    rho_b[0, 0] = 1
    rho0 = np.kron(rho_s, rho_b)

    x = np.linalg.solve(S, _vec(rho0))
    levels = np.diag(np.linalg.solve(S, L @ S))

    def evolve_projected(x0, time):
        return _unvec(S @ (np.exp(-1j * levels * time) * x0), D)

    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * t)) @ dag(V)
    exact = partial_trace_bath(U @ rho0 @ dag(U), 4, config.dim_b)
    projected = partial_trace_bath(evolve_projected(x, t), 4, config.dim_b)
    fid = _fidelity_real(exact, projected)

    # projected subspace: right/left vectors of the chosen system levels
    keep = np.array([lab.j in sector for lab in unperturbed_basis(config).labels])
    P_sec = R[:, keep] @ Rinv[keep, :]
    rho_p = P_sec @ rho0 @ dag(P_sec)
    tr = np.trace(rho_p).real
    details = {
        "residual_untriangulated": plain,
        "lower_part": float(np.max(np.abs(np.tril(L_tri, -1)), initial=0.0)),
        "t": t,
        "tau_s": tau,
        "completed_blocks": sorted(str(k) for k, b in blocks.items() if b.completed),
    }
    if tr > tol:
        rho_p = rho_p / tr
        x_p = np.linalg.solve(S, _vec(rho_p))
        ideal_u = _system_evolution(config, t)
        rho_p_s = partial_trace_bath(rho_p, 4, config.dim_b)
        ideal = ideal_u @ rho_p_s @ dag(ideal_u)
        sub = partial_trace_bath(evolve_projected(x_p, t), 4, config.dim_b)
        details["fidelity_subspace"] = _fidelity_real(ideal, sub)
        total_ideal = ideal_u @ rho_s @ dag(ideal_u)
        details["fidelity_total"] = _fidelity_real(total_ideal, exact)
        # swap on the projected state before (lam = 0) and after switching on lam
        free = partial_trace_bath(_propagate(H - hams.lam * hams.H_int, rho_p, tau), 4, config.dim_b)
        coupled = partial_trace_bath(evolve_projected(x_p, tau), 4, config.dim_b)
        from .gates import ideal_swap

        usw = ideal_swap()
        details["swap_before_after"] = float(np.max(np.abs(free - coupled)))
        details["swap_vs_ideal"] = float(np.max(np.abs(coupled - usw @ rho_p_s @ dag(usw))))
    return DFReport(residual_liouville=residual, fidelity=fid, details=details)


def _fidelity_real(a, b):
    a = (a + dag(a)) / 2
    b = (b + dag(b)) / 2
    return float(np.real(fidelity(a, b)))


def _propagate(H, rho, t):
    w, V = np.linalg.eigh(H)
    U = (V * np.exp(-1j * w * t)) @ dag(V)
    return U @ rho @ dag(U)


def _swap_time(config):
    from .gates import swap_duration

    return swap_duration(config.J)


def _system_evolution(config, t):
    u = system_basis()
    phases = np.exp(-1j * np.array(SPIN_EXCHANGE_EIGENVALUES) * config.J.integral(t))
    return (u * phases) @ dag(u)
