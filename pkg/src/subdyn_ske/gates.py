"""Swap and XOR gates, and the coupling-time correction that cancels interaction phase shifts."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonUniformShiftError, NumericalSingularityError, UnreachableDurationError, ValidationError
from .linalg import dag, wrap_angle
from .model import SIGMA_Z, I2, CompositeIndex, SPIN_EXCHANGE_EIGENVALUES, JProfile, build_hamiltonians, system_basis, unperturbed_basis

SWAP_PHASES = (-math.pi / 4, -math.pi / 4, -math.pi / 4, 3 * math.pi / 4)


def _odd_pi_crossings(profile):
    """Yield the times at which the running integral of J hits an odd multiple of pi."""
    elapsed, acc = 0.0, 0.0
    segs = list(profile.segments)
    for idx, (dur, val) in enumerate(segs):
        tail = idx == len(segs) - 1
        if val == 0:
            if tail:
                return
            elapsed += dur
            continue
        end = acc + val * (math.inf if tail else dur)
        lo, hi = (acc, end) if val > 0 else (end, acc)
        # odd multiples x = (2m+1) pi with lo < x <= hi (ascending) or lo <= x < hi (descending)
        if val > 0:
            m = math.floor((acc / math.pi - 1) / 2) + 1
            while True:
                x = (2 * m + 1) * math.pi
                if x <= acc:
                    m += 1
                    continue
                if x > hi:
                    break
                yield elapsed + (x - acc) / val
                m += 1
        else:
            m = math.ceil((acc / math.pi - 1) / 2) - 1
            while True:
                x = (2 * m + 1) * math.pi
                if x >= acc:
                    m -= 1
                    continue
                if x < lo:
                    break
                yield elapsed + (x - acc) / val
                m -= 1
        if tail:
            return
        acc = end
        elapsed += dur


def swap_duration(profile, branch=0):
    """Smallest tau_s > 0 with integral_0^tau_s J = pi (mod 2 pi); ``branch`` picks later solutions."""
    if not isinstance(profile, JProfile):
        profile = JProfile.constant(profile)
    for k, t in enumerate(_odd_pi_crossings(profile)):
        if t > 0 and k >= branch:
            return t
    raise UnreachableDurationError(math.pi * (2 * branch + 1))


def _from_phases(phases):
    u = system_basis()
    return (u * np.exp(1j * np.asarray(phases))) @ dag(u)


def ideal_swap(config=None, composite=False, branch=0):
    """U_sw = sum_j e^{-i pi/4}|phi_j><phi_j| (triplet) + e^{3i pi/4}|phi_4><phi_4|.

    With ``composite=True`` the bath free evolution over tau_s is attached:
    U_sw (x) exp(-i H_B tau_s).
    """
    u = _from_phases(SWAP_PHASES)
    if not composite:
        return u
    if config is None:
        raise ValidationError("composite swap needs a model config")
    tau = swap_duration(config.J, branch)
    bath = build_hamiltonians(config.with_(lam=0.0)).H_B
    bath_diag = np.real(np.diag(bath))[: config.dim_b]
    return np.kron(u, np.diag(np.exp(-1j * bath_diag * tau)))


def sqrt_swap():
    """Principal square root: every eigenphase halved on (-pi, pi]."""
    return _from_phases(np.asarray(SWAP_PHASES) / 2)


def z_rotation(angle, qubit):
    """exp(i * angle * S^z) on the given qubit (1 or 2)."""
    sz = SIGMA_Z / 2
    single = np.diag(np.exp(1j * angle * np.diag(sz)))
    return np.kron(single, I2) if qubit == 1 else np.kron(I2, single)


def xor_gate(half_swap=None):
    """e^{i(pi/2)S1z} e^{-i(pi/2)S2z} U_sw^{1/2} e^{i pi S1z} U_sw^{1/2}.

    ``half_swap`` replaces U_sw^{1/2} (used for negative controls).
    """
    h = sqrt_swap() if half_swap is None else half_swap
    return z_rotation(math.pi / 2, 1) @ z_rotation(-math.pi / 2, 2) @ h @ z_rotation(math.pi, 1) @ h


def entangling_phase(u):
    """u00 u11 / (u01 u10) for a diagonal two-qubit gate: -1 for a controlled-phase, +1 for local phases."""
    d = np.diag(u)
    return d[0] * d[3] / (d[1] * d[2])


@dataclass
class GateReport:
    tau_s: float
    delta_t: dict
    uniform_delta_t: float | None = None
    residual: float | None = None
    phases: dict = field(default_factory=dict)
    lhs: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)
    bath_phase_mismatch: float | None = None
    phase_error: dict = field(default_factory=dict)
    corrected: np.ndarray | None = None


def _shift_map(shifts):
    """Accept a mapping label -> dE, SubdynSets, or an object carrying them."""
    if hasattr(shifts, "sets"):
        shifts = shifts.sets
    if isinstance(shifts, dict):
        return {CompositeIndex(k[0], tuple(k[1])): complex(v).real for k, v in shifts.items()}
    return {s.nu: complex(s.delta_E).real for s in shifts}


def _constant_j(config):
    if not config.J.is_constant:
        raise ValidationError("the closed-form correction needs a time-independent J")
    return config.J.value(0.0)


def delta_t_correction(config, shifts, tol=1e-9, branch=0, strict=False):
    """Per-level delay dt = -tau_s / (E_S J / dE + 1) and the uniform dt when shifts allow one.

    ``E_S`` is 1/4 for the triplet levels and -3/4 for the singlet, so the two
    closed forms agree exactly when dE_4 = -3 dE_{1,2,3}. ``lhs`` holds the
    accumulated phase integral at tau_s + dt; it equals ``target`` when the
    correction works.
    """
    J = _constant_j(config)
    tau = swap_duration(config.J, branch)
    report = GateReport(tau_s=tau, delta_t={})
    for nu, de in _shift_map(shifts).items():
        e_s = SPIN_EXCHANGE_EIGENVALUES[nu[0] - 1]
        if de == 0:
            dt = 0.0
        else:
            denom = e_s * J / de + 1
            if abs(denom) < 1e-300:
                raise NumericalSingularityError(f"shift cancels the exchange phase at nu={nu}")
            dt = -tau / denom
        t_end = tau + dt
        lhs = e_s * config.J.integral(t_end) + de * t_end
        report.delta_t[nu] = dt
        report.lhs[nu] = lhs
        report.target[nu] = e_s * config.J.integral(tau)
        report.phases[nu] = complex(np.exp(-1j * lhs))
    values = np.array(list(report.delta_t.values()))
    spread = float(values.max() - values.min()) if len(values) else 0.0
    if spread <= tol * max(1.0, tau):
        report.uniform_delta_t = float(values.mean()) if len(values) else 0.0
    elif strict:
        raise NonUniformShiftError(report, spread)
    return report


def corrected_swap(config, shifts, delta_t, branch=0):
    """Compare U'_sw(tau_s + dt) built from the Theta spectrum with the ideal swap.

    The bath phase is taken at tau_s on both sides (as in the ideal target);
    the leftover sum_k omega_k n_k dt is reported separately as
    ``bath_phase_mismatch``.
    """
    J = _constant_j(config)
    tau = swap_duration(config.J, branch)
    basis = unperturbed_basis(config.with_(lam=0.0))
    shift = _shift_map(shifts)
    t_end = tau + delta_t
    report = GateReport(tau_s=tau, delta_t={nu: delta_t for nu in shift}, uniform_delta_t=delta_t)
    worst, mismatch = 0.0, 0.0
    full = np.zeros(basis.dim, dtype=complex)
    for i, nu in enumerate(basis.labels):
        de = shift.get(nu, 0.0)
        e_s = SPIN_EXCHANGE_EIGENVALUES[nu[0] - 1]
        e_b = basis.energies[i] - e_s * J
        system_phase = e_s * config.J.integral(t_end) + de * t_end
        ideal_phase = e_s * config.J.integral(tau)
        dist = abs(float(wrap_angle(system_phase - ideal_phase)))
        worst = max(worst, dist)
        report.phase_error[nu] = dist
        mismatch = max(mismatch, abs(float(wrap_angle(e_b * delta_t))))
        report.phases[nu] = complex(np.exp(-1j * (system_phase + e_b * tau)))
        report.lhs[nu] = system_phase
        report.target[nu] = ideal_phase
        full[i] = np.exp(-1j * (system_phase + e_b * t_end))
    report.residual = worst
    report.bath_phase_mismatch = mismatch
    report.corrected = (basis.vectors * full) @ dag(basis.vectors)
    return report
