"""Two-qubit Heisenberg system coupled to a truncated bosonic bath.

Conventions (hbar = 1, all energies dimensionless):

* qubit computational basis ``|0>, |1>`` with ``sigma_z|0> = +|0>``;
  two-qubit index ``2*q1 + q2`` so the order is ``|00>, |01>, |10>, |11>``.
* composite space is ``system (x) mode_1 (x) ... (x) mode_K`` with each mode
  truncated to occupations ``0..n_max`` (``b^+|n_max> = 0``).
* unperturbed labels ``nu = (j, n_1..n_K)`` are ordered j-major, then
  lexicographically in the occupations (mode 1 most significant), which is
  exactly the composite product ordering once the system factor is rotated to
  the triplet/singlet basis.
"""

import enum
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import CapacityError, ValidationError
from .linalg import dag, outer

DEFAULT_MAX_DIM = 4096

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
I2 = np.eye(2, dtype=complex)

# S1.S2 eigenvalues per system level j = 1..4
SPIN_EXCHANGE_EIGENVALUES = (0.25, 0.25, 0.25, -0.75)


def system_basis():
    """Columns are |phi_1> = |11>, |phi_2> = |00>, |phi_3>, |phi_4> (triplet, triplet, triplet, singlet)."""
    r = 1 / math.sqrt(2)
    u = np.zeros((4, 4), dtype=complex)
    u[3, 0] = 1
    u[0, 1] = 1
    u[1, 2] = u[2, 2] = r
    u[1, 3], u[2, 3] = r, -r
    return u


def spin_exchange():
    """S1.S2 on the two-qubit space."""
    return sum(np.kron(p, p) for p in PAULI.values()) / 4


def max_dim_from_env():
    raw = os.environ.get("SUBDYN_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValidationError(f"SUBDYN_MAX_DIM must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValidationError("SUBDYN_MAX_DIM must be positive")
    return value


class CouplingKind(str, enum.Enum):
    DEPHASING = "dephasing"
    CALDEIRA_LEGGETT = "caldeira_leggett"


class Order(str, enum.Enum):
    EXACT = "exact"
    ORDER1 = "order1"


@dataclass(frozen=True)
class Mode:
    """One bath oscillator. ``spin``/``axis`` tag Caldeira-Leggett modes (spin 1|2, axis x|y|z)."""

    omega: float
    g: complex
    spin: int | None = None
    axis: str | None = None


class JProfile:
    """Piecewise-constant exchange coupling.

    ``segments`` is a sequence of ``(duration, value)``; the last value is held
    for all later times.
    """

    def __init__(self, segments):
        segs = tuple((float(d), float(v)) for d, v in segments)
        if not segs:
            raise ValidationError("J profile needs at least one segment")
        for d, _ in segs[:-1]:
            if not d > 0 or math.isinf(d):
                raise ValidationError("J segment durations must be finite and positive")
        self.segments = segs

    @classmethod
    def constant(cls, value):
        return cls([(math.inf, value)])

    @property
    def is_constant(self):
        return len({v for _, v in self.segments}) == 1

    def value(self, t=0.0):
        elapsed = 0.0
        for d, v in self.segments[:-1]:
            if t < elapsed + d:
                return v
            elapsed += d
        return self.segments[-1][1]

    def breakpoints(self):
        """Segment start times (excluding the open tail's end)."""
        out, elapsed = [0.0], 0.0
        for d, _ in self.segments[:-1]:
            elapsed += d
            out.append(elapsed)
        return out

    def integral(self, t):
        """Exact integral of J over [0, t]."""
        total, elapsed = 0.0, 0.0
        for d, v in self.segments[:-1]:
            step = min(d, max(t - elapsed, 0.0))
            total += v * step
            elapsed += d
        if t > elapsed:
            total += self.segments[-1][1] * (t - elapsed)
        return total

    def pieces(self, t0, t1):
        """Split [t0, t1] into ``(duration, value)`` pieces of constant J."""
        cuts = [b for b in self.breakpoints()[1:] if t0 < b < t1]
        edges = [t0, *cuts, t1]
        return [(b - a, self.value(a)) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def __eq__(self, other):
        return isinstance(other, JProfile) and self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    def __repr__(self):
        if self.is_constant:
            return f"JProfile.constant({self.segments[0][1]!r})"
        return f"JProfile({list(self.segments)!r})"


@dataclass(frozen=True)
class ModelConfig:
    J: JProfile
    lam: float
    modes: tuple
    n_max: int
    coupling_kind: CouplingKind = CouplingKind.DEPHASING
    max_dim: int | None = None

    def __post_init__(self):
        if not isinstance(self.J, JProfile):
            object.__setattr__(self, "J", JProfile.constant(self.J))
        object.__setattr__(self, "coupling_kind", CouplingKind(self.coupling_kind))
        modes = tuple(m if isinstance(m, Mode) else Mode(*m) for m in self.modes)
        object.__setattr__(self, "modes", modes)
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValidationError(f"n_max must be an integer >= 1, got {self.n_max}")
        if not modes:
            raise ValidationError("at least one bath mode is required")
        for k, m in enumerate(modes):
            if not m.omega > 0:
                raise ValidationError(f"mode {k}: omega must be > 0, got {m.omega}")
            if self.coupling_kind is CouplingKind.CALDEIRA_LEGGETT:
                if m.spin not in (1, 2) or m.axis not in PAULI:
                    raise ValidationError(f"mode {k}: caldeira_leggett modes need spin in (1, 2) and axis in x/y/z")
        cap = self.max_dim if self.max_dim is not None else max_dim_from_env()
        if self.dim > cap:
            raise CapacityError(self.dim, cap)

    @property
    def n_modes(self):
        return len(self.modes)

    @property
    def dim_b(self):
        return (self.n_max + 1) ** self.n_modes

    @property
    def dim(self):
        return 4 * self.dim_b

    def with_(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


class CompositeIndex(NamedTuple):
    j: int
    occupations: tuple

    def __str__(self):
        return "(" + ",".join(str(x) for x in (self.j, *self.occupations)) + ")"


def fock_labels(n_modes, n_max):
    return list(itertools.product(range(n_max + 1), repeat=n_modes))


def composite_labels(config):
    fock = fock_labels(config.n_modes, config.n_max)
    return [CompositeIndex(j, occ) for j in range(1, 5) for occ in fock]


def label_to_index(nu, config):
    j, occ = nu
    if not 1 <= j <= 4 or len(occ) != config.n_modes or any(not 0 <= n <= config.n_max for n in occ):
        raise ValidationError(f"label {nu} outside the truncated space")
    fi = 0
    for n in occ:
        fi = fi * (config.n_max + 1) + n
    return (j - 1) * config.dim_b + fi


def index_to_label(i, config):
    if not 0 <= i < config.dim:
        raise ValidationError(f"index {i} outside 0..{config.dim - 1}")
    j, fi = divmod(i, config.dim_b)
    occ = []
    for _ in range(config.n_modes):
        fi, n = divmod(fi, config.n_max + 1)
        occ.append(n)
    return CompositeIndex(j + 1, tuple(reversed(occ)))


def lowering(n_max):
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def _embed_mode(op, k, config):
    """Place a single-mode operator on mode k of the bath factor."""
    d = config.n_max + 1
    mats = [np.eye(d, dtype=complex)] * config.n_modes
    mats = list(mats)
    mats[k] = op
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


class Hamiltonians(NamedTuple):
    H_S: np.ndarray
    H_B: np.ndarray
    H_int: np.ndarray
    H: np.ndarray
    lam: float


def build_hamiltonians(config, t=0.0):
    """Assemble H_S, H_B, H_int and H = H_S + H_B + lam*H_int at time ``t``.

    ``H_int`` carries no factor of ``lam``. Couplings enter as
    ``g b^+ + g* b`` so every piece is Hermitian.
    """
    dim_b = config.dim_b
    eye_b = np.eye(dim_b, dtype=complex)
    eye_s = np.eye(4, dtype=complex)
    a = lowering(config.n_max)
    H_S = config.J.value(t) * np.kron(spin_exchange(), eye_b)
    bath = sum(m.omega * _embed_mode(dag(a) @ a, k, config) for k, m in enumerate(config.modes))
    H_B = np.kron(eye_s, bath)
    H_int = np.zeros((config.dim, config.dim), dtype=complex)
    for k, m in enumerate(config.modes):
        field_op = _embed_mode(m.g * dag(a) + np.conj(m.g) * a, k, config)
        if config.coupling_kind is CouplingKind.DEPHASING:
            sys_op = np.kron(SIGMA_Z, I2) + np.kron(I2, SIGMA_Z)
        else:
            p = PAULI[m.axis]
            sys_op = np.kron(p, I2) if m.spin == 1 else np.kron(I2, p)
        H_int += np.kron(sys_op, field_op)
    H = H_S + H_B + config.lam * H_int
    return Hamiltonians(H_S, H_B, H_int, H, float(config.lam))


@dataclass(frozen=True)
class Basis:
    """Orthonormal unperturbed basis |phi_nu> with energies E0_nu (columns of ``vectors``)."""

    vectors: np.ndarray
    labels: tuple
    energies: np.ndarray
    dim_s: int = 4
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {nu: i for i, nu in enumerate(self.labels)})

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def dim_b(self):
        return self.dim // self.dim_s

    def index(self, nu):
        if isinstance(nu, (int, np.integer)):
            return int(nu)
        try:
            return self._index[CompositeIndex(nu[0], tuple(nu[1]))]
        except KeyError:
            raise ValidationError(f"unknown label {nu}") from None

    def vector(self, nu):
        return self.vectors[:, self.index(nu)]

    def projector(self, nu):
        return outer(self.vector(nu))

    def complement(self, nu):
        return np.eye(self.dim) - self.projector(nu)

    def decomposition(self):
        from .linalg import SpectralDecomposition

        terms = tuple((complex(e), outer(self.vectors[:, i])) for i, e in enumerate(self.energies))
        return SpectralDecomposition(terms, self.labels)

    def to_basis(self, op):
        """Matrix elements <phi_nu| op |phi_mu>."""
        return dag(self.vectors) @ op @ self.vectors


def unperturbed_energy(nu, config, t=0.0):
    j, occ = nu
    e_s = SPIN_EXCHANGE_EIGENVALUES[j - 1] * config.J.value(t)
    return e_s + sum(m.omega * n for m, n in zip(config.modes, occ))


def unperturbed_basis(config, t=0.0):
    """|phi_j> (x) |n_1..n_K> in label order, with E0 = (1/4 - delta_j4 3/4) J + sum_k omega_k n_k."""
    labels = tuple(composite_labels(config))
    vectors = np.kron(system_basis(), np.eye(config.dim_b, dtype=complex))
    energies = np.array([unperturbed_energy(nu, config, t) for nu in labels])
    return Basis(vectors, labels, energies)


def split_by_basis(H, basis, tol=1e-10):
    """Split H into the part diagonal in ``basis`` and the off-diagonal remainder.

    Returns ``(H0, H1)`` in the same representation as ``H``.
    """
    v = basis.vectors if isinstance(basis, Basis) else np.asarray(basis)
    if np.max(np.abs(dag(v) @ v - np.eye(v.shape[1]))) > tol or v.shape[0] != v.shape[1]:
        raise ValidationError("basis is not orthonormal and complete")
    diag = np.diag(dag(v) @ H @ v)
    H0 = (v * diag) @ dag(v)
    return H0, H - H0
