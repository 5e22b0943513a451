"""Command-line front end: JSON config in, deterministic JSON or CSV out."""

import argparse
import csv
import io
import json
import math
import sys

import jsonschema
import numpy as np

from . import dfcheck, gates
from .errors import CapacityError, NumericalSingularityError, SubdynError, UnreachableDurationError, ValidationError
from .linalg import dag, opnorm, partial_trace_bath
from .model import CouplingKind, JProfile, ModelConfig, Mode, Order, fock_labels
from .oracle import exact_projector
from .subdyn import (
    fidelity,
    project_density,
    propagate_projected,
    run_pipeline,
)

EXIT_OK, EXIT_SCHEMA, EXIT_CAPACITY, EXIT_SINGULAR = 0, 1, 2, 3

COMMANDS = ("spectrum", "subdyn", "gates", "correct", "fidelity", "df-check", "triangulate", "liouville", "sweep")

DEFAULT_TOLERANCES = {
    "degeneracy_gap": 1e-9,
    "pinv_rcond": 1e-10,
    "uniform_shift": 1e-9,
    "state_trace": 1e-10,
}

_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["J", "lambda", "n_max", "modes"],
            "properties": {
                "J": {
                    "oneOf": [
                        _number,
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["segments"],
                            "properties": {
                                "segments": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {
                                        "type": "array",
                                        "minItems": 2,
                                        "maxItems": 2,
                                        "items": {"type": ["number", "null"]},
                                    },
                                }
                            },
                        },
                    ]
                },
                "lambda": _number,
                "n_max": {"type": "integer", "minimum": 1},
                "coupling": {"enum": [k.value for k in CouplingKind]},
                "modes": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["omega", "g"],
                        "properties": {
                            "omega": _number,
                            "g": _complex,
                            "spin": {"enum": [1, 2]},
                            "axis": {"enum": ["x", "y", "z"]},
                        },
                    },
                },
            },
        },
        "order": {"enum": [o.value for o in Order]},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in DEFAULT_TOLERANCES},
        },
        "state": {"type": "array", "items": _complex, "minItems": 4, "maxItems": 4},
        "time": {"type": "number", "minimum": 0},
        "df": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"occupations": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        },
        "blocks": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["omega", "g", "n"],
                "properties": {"omega": _number, "g": _complex, "n": {"type": "integer", "minimum": 0}},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["parameter", "start", "stop", "num"],
            "properties": {
                "parameter": {"enum": ["lambda", "n_max"]},
                "start": _number,
                "stop": _number,
                "num": {"type": "integer", "minimum": 1},
                "command": {"enum": [c for c in COMMANDS if c != "sweep"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
        },
    },
}


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for capacity errors here
    def error(self, message):
        raise ArgumentError(message)


# ---------------------------------------------------------------- formatting


def _fmt(x):
    """Round floats to 15 significant digits; complex becomes {re, im}."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _fmt(float(x.real)), "im": _fmt(float(x.imag))}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return str(x)
        x = float(f"{x:.15g}")
        return 0.0 if x == 0 else x
    if isinstance(x, dict):
        return {str(k): _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    if isinstance(x, np.ndarray):
        return _fmt(x.tolist())
    return x


def _label(nu):
    return "(" + ",".join(str(v) for v in (nu[0], *nu[1])) + ")"


def _flatten_row(row):
    flat = {}
    for k, v in row.items():
        if isinstance(v, (complex, np.complexfloating)):
            flat[f"{k}_re"] = _fmt(float(v.real))
            flat[f"{k}_im"] = _fmt(float(v.imag))
        else:
            flat[k] = _fmt(v)
    return flat


def render(result, fmt):
    if fmt == "json":
        return json.dumps(_fmt(result), indent=2, ensure_ascii=True) + "\n"
    buf = io.StringIO()
    for k, v in result["header"].items():
        buf.write(f"# {k}={json.dumps(_fmt(v), separators=(',', ':'))}\n")
    rows = [_flatten_row(r) for r in result["rows"]]
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [k for k in r if k not in fields]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", restval="")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- config


def _complex_value(v):
    return complex(v[0], v[1]) if isinstance(v, list) else v


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    validate_config(raw)
    return raw


def validate_config(raw):
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config error at {where}: {exc.message}") from None


def model_from_config(raw, **overrides):
    m = raw["model"]
    if isinstance(m["J"], dict):
        segs = [(math.inf if d is None else d, v) for d, v in m["J"]["segments"]]
        if any(v is None for _, v in segs):
            raise ValidationError("J segment values must be numbers")
        J = JProfile(segs)
    else:
        J = JProfile.constant(m["J"])
    modes = tuple(Mode(md["omega"], _complex_value(md["g"]), md.get("spin"), md.get("axis")) for md in m["modes"])
    params = {
        "J": J,
        "lam": m["lambda"],
        "modes": modes,
        "n_max": m["n_max"],
        "coupling_kind": m.get("coupling", "dephasing"),
    }
    params.update(overrides)
    return ModelConfig(**params)


def _tolerances(raw):
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(raw.get("tolerances", {}))
    return tol


def _header(command, raw, config, tol, order=None):
    h = {"command": command, "tolerances": tol, "dim": config.dim, "lambda": config.lam, "n_max": config.n_max}
    if order is not None:
        h["order"] = order.value
    return h


def _system_state(raw):
    if "state" not in raw:
        return None
    psi = np.array([_complex_value(v) for v in raw["state"]], dtype=complex)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValidationError("state must be nonzero")
    return psi / norm


# ---------------------------------------------------------------- commands


def cmd_spectrum(raw, config, order, tol, branch):
    p = run_pipeline(config, Order.EXACT)
    rows = []
    for i, nu in enumerate(p.basis.labels):
        exact = None if nu in p.eig.ambiguous else p.eig.eigenvalue(nu)
        rows.append(
            {
                "nu": _label(nu),
                "j": nu[0],
                "occupations": list(nu[1]),
                "E0": float(p.basis.energies[i]),
                "E_exact": exact,
                "ambiguous": nu in p.eig.ambiguous,
            }
        )
    return {"header": _header("spectrum", raw, config, tol), "rows": rows}


def cmd_subdyn(raw, config, order, tol, branch):
    p = run_pipeline(config, order)
    H = p.hams.H
    rows = []
    for s in p.sets:
        row = {"nu": _label(s.nu), "E0": s.E0, "delta_E": complex(s.delta_E), "E_theta": s.E0 + complex(s.delta_E).real}
        if s.nu in p.eig.ambiguous:
            row.update(E_exact=None, pi_oracle_error=None)
        else:
            ref = exact_projector(H, s.nu, p.basis, p.eig)
            row.update(E_exact=ref.eigenvalue, pi_oracle_error=opnorm(s.Pi - ref.spectral))
        row.update(
            idempotence=opnorm(s.Pi @ s.Pi - s.Pi),
            commutator=opnorm(H @ s.Pi - s.Pi @ H),
            norm_C=opnorm(s.C),
            norm_D=opnorm(s.D),
            support_defect=float(s.support_defect()),
        )
        rows.append(row)
    header = _header("subdyn", raw, config, tol, order)
    header["theta_leakage"] = p.theta.leakage()
    return {"header": header, "rows": rows}


def _matrix_rows(name, u):
    return [{"gate": name, "row": r, "col": c, "value": complex(u[r, c])} for r in range(4) for c in range(4)]


def cmd_gates(raw, config, order, tol, branch):
    u, h, x = gates.ideal_swap(), gates.sqrt_swap(), gates.xor_gate()
    header = _header("gates", raw, config, tol)
    header["tau_s"] = gates.swap_duration(config.J)
    header["swap_phases"] = [complex(np.exp(1j * a)) for a in gates.SWAP_PHASES]
    header["xor_entangling_phase"] = complex(gates.entangling_phase(x))
    rows = _matrix_rows("swap", u) + _matrix_rows("sqrt_swap", h) + _matrix_rows("xor", x)
    return {"header": header, "rows": rows}


def cmd_correct(raw, config, order, tol, branch):
    p = run_pipeline(config, order)
    report = gates.delta_t_correction(config, p.sets, tol=tol["uniform_shift"])
    dts = np.array(list(report.delta_t.values()))
    dt = report.uniform_delta_t if report.uniform_delta_t is not None else float(np.mean(dts))
    swap = gates.corrected_swap(config, p.sets, dt)
    header = _header("correct", raw, config, tol, order)
    header.update(
        tau_s=report.tau_s,
        uniform=report.uniform_delta_t is not None,
        uniform_delta_t=report.uniform_delta_t,
        delta_t_used=dt,
        delta_t_spread=float(dts.max() - dts.min()),
        residual=swap.residual,
        bath_phase_mismatch=swap.bath_phase_mismatch,
    )
    rows = [
        {
            "nu": _label(s.nu),
            "delta_E": complex(s.delta_E),
            "delta_t": report.delta_t[s.nu],
            "lhs": report.lhs[s.nu],
            "target": report.target[s.nu],
            "phase_error": swap.phase_error[s.nu],
        }
        for s in p.sets
    ]
    return {"header": header, "rows": rows}


def _normalized(rho):
    tr = np.trace(rho)
    return rho / tr if abs(tr) > 0 else rho


def cmd_fidelity(raw, config, order, tol, branch):
    p = run_pipeline(config, order)
    psi_s = _system_state(raw)
    if psi_s is None:
        psi_s = np.array([-0.5, 0.5, 0.5, -0.5], dtype=complex)
    vac = np.zeros(config.dim_b, dtype=complex)
    vac[0] = 1
    psi = np.kron(psi_s, vac)
    t = raw.get("time", gates.swap_duration(config.J))
    rho = np.outer(psi, psi.conj())
    start = project_density(rho, p.sets)
    end = propagate_projected(start, p.theta, t)
    r0, rt = _normalized(start.rho), _normalized(end.rho)
    pops0, popst = np.diag(r0), np.diag(rt)
    header = _header("fidelity", raw, config, tol, order)
    header["time"] = t
    header["fidelity_full"] = fidelity(_hermitize(r0), _hermitize(rt))
    header["fidelity_diagonal"] = fidelity(np.diag(pops0.real), np.diag(popst.real))
    # reduced densities of the projected state at 0 and t
    u = p.basis.vectors
    red0 = partial_trace_bath(u @ r0 @ dag(u), 4, config.dim_b)
    redt = partial_trace_bath(u @ rt @ dag(u), 4, config.dim_b)
    header["fidelity_reduced"] = fidelity(_hermitize(red0), _hermitize(redt))
    header["projected_trace"] = complex(np.trace(start.rho))
    rows = [
        {"nu": _label(nu), "population_0": float(a.real), "population_t": float(b.real)}
        for nu, a, b in zip(start.labels, pops0, popst)
    ]
    return {"header": header, "rows": rows}


def _hermitize(a):
    return (a + dag(a)) / 2


def cmd_df_check(raw, config, order, tol, branch):
    p = run_pipeline(config, order)
    report = dfcheck.df_residual(p.hams, p.basis, p.sets)
    g = [m.g for m in config.modes]
    dephasing = config.coupling_kind is CouplingKind.DEPHASING
    constraints = {occ: dfcheck.bath_df_constraint(g, occ) for occ in fock_labels(config.n_modes, config.n_max)}
    probe = raw.get("df", {}).get("occupations")
    if probe is not None:
        if len(probe) != config.n_modes:
            raise ValidationError("df.occupations must have one entry per mode")
        bath = dfcheck.bath_df_constraint(g, probe)
    else:
        bath = max(constraints.values(), key=abs)
    header = _header("df-check", raw, config, tol, order)
    header.update(
        residual_hilbert=report.residual_hilbert,
        residual_bath_constraint=bath,
        probe_occupations=probe,
        failing_configurations=sum(abs(c) > 1e-12 for c in constraints.values()),
    )
    if probe is not None and len(probe) >= 3:
        ratio = dfcheck.bv_ratio_residuals(g, probe)
        header["ratio_residual"] = ratio.max_residual
        header["ratio_undefined_sites"] = ratio.undefined
    rows = []
    for nu, v in report.per_nu.items():
        row = {"nu": _label(nu), "hilbert_residual": v, "constraint": constraints[nu[1]]}
        if dephasing:
            row["common_denominator_form"] = dfcheck.common_denominator_form(config.lam, g, nu)
        rows.append(row)
    return {"header": header, "rows": rows}


def cmd_triangulate(raw, config, order, tol, branch):
    if "blocks" in raw:
        specs = [(b["omega"], _complex_value(b["g"]), b["n"]) for b in raw["blocks"]]
    else:
        specs = [(m.omega, m.g, n) for m in config.modes for n in range(config.n_max)]
    rows = []
    for omega, g, n in specs:
        b = dfcheck.triangulate_block(omega, g, n, branch)
        ev = np.linalg.eigvalsh(b.M)
        rows.append(
            {
                "omega": omega,
                "g": float(b.g),
                "n": n,
                "branch": branch,
                "gamma": b.gamma,
                "zeta": b.zeta,
                "zeta_closed_form": b.zeta_closed_form,
                "completed": b.completed,
                "det_T": float(np.linalg.det(b.T)),
                "m_tri_00": b.M_tri[0, 0],
                "m_tri_01": b.M_tri[0, 1],
                "m_tri_10": b.M_tri[1, 0],
                "m_tri_11": b.M_tri[1, 1],
                "eig_lo": ev[0],
                "eig_hi": ev[1],
            }
        )
    return {"header": _header("triangulate", raw, config, tol), "rows": rows}


def cmd_liouville(raw, config, order, tol, branch):
    psi = _system_state(raw)
    rho_s = None if psi is None else np.outer(psi, psi.conj())
    report = dfcheck.liouville_df(config, rho_s=rho_s, t=raw.get("time"), branch=branch)
    header = _header("liouville", raw, config, tol)
    header.update(residual_liouville=report.residual_liouville, fidelity=report.fidelity)
    rows = [{"quantity": k, "value": v} for k, v in report.details.items()]
    return {"header": header, "rows": rows}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "subdyn": cmd_subdyn,
    "gates": cmd_gates,
    "correct": cmd_correct,
    "fidelity": cmd_fidelity,
    "df-check": cmd_df_check,
    "triangulate": cmd_triangulate,
    "liouville": cmd_liouville,
}


def parse_sweep(text):
    """``lambda=0.01:0.1:5`` -> ("lambda", [0.01, ..., 0.1])."""
    try:
        name, spec = text.split("=", 1)
        start, stop, num = spec.split(":")
        start, stop, num = float(start), float(stop), int(num)
    except ValueError:
        raise ValidationError(f"bad sweep spec {text!r}; expected name=start:stop:num") from None
    return _grid(name.strip(), start, stop, num)


def _grid(name, start, stop, num):
    if name not in ("lambda", "n_max"):
        raise ValidationError(f"sweep parameter must be lambda or n_max, got {name!r}")
    if num < 1:
        raise ValidationError("sweep needs at least one point")
    values = np.linspace(start, stop, num).tolist()
    if name == "n_max":
        if any(v != int(v) for v in values):
            raise ValidationError("n_max sweep must land on integers")
        values = [int(v) for v in values]
    return name, values


def run_command(command, raw, order=None, branch="+", sweep=None, inner=None):
    """Evaluate one command on a validated config dict; returns the result dict."""
    tol = _tolerances(raw)
    order = Order(order or raw.get("order", "exact"))
    if command == "sweep" or sweep is not None:
        if sweep is None:
            if "sweep" not in raw:
                raise ValidationError("sweep needs --sweep or a 'sweep' section in the config")
            s = raw["sweep"]
            sweep = _grid(s["parameter"], s["start"], s["stop"], s["num"])
        if command == "sweep":
            command = inner or raw.get("sweep", {}).get("command", "spectrum")
        name, values = sweep
        rows, headers = [], []
        for v in values:
            key = "lam" if name == "lambda" else "n_max"
            config = model_from_config(raw, **{key: v})
            res = HANDLERS[command](raw, config, order, tol, branch)
            point = {k: x for k, x in res["header"].items() if k not in ("command", "tolerances")}
            headers.append({name: v, **point})
            rows += [{name: v, **r} for r in res["rows"]]
        header = {"command": f"sweep:{command}", "tolerances": tol, "parameter": name, "values": values}
        return {"header": header, "points": headers, "rows": rows}
    config = model_from_config(raw)
    return HANDLERS[command](raw, config, order, tol, branch)


def build_parser():
    p = _Parser(prog="subdyn-ske", description="Projected-subspace dynamics of two exchange-coupled qubits in a bosonic bath.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--order", choices=[o.value for o in Order])
    p.add_argument("--out", help="output path (default: stdout or config output.path)")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--sweep", help="parameter grid, e.g. lambda=0.01:0.1:5")
    p.add_argument("--of", dest="inner", choices=[c for c in COMMANDS if c != "sweep"], help="command repeated by 'sweep'")
    p.add_argument("--branch", choices=["plus", "minus"], default="plus", help="sign of the triangulation root")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        raw = load_config(args.config)
        sweep = parse_sweep(args.sweep) if args.sweep else None
        branch = "+" if args.branch == "plus" else "-"
        result = run_command(args.command, raw, args.order, branch, sweep, args.inner)
        out_cfg = raw.get("output", {})
        fmt = args.format or out_cfg.get("format", "json")
        text = render(result, fmt)
        path = args.out or out_cfg.get("path")
        if path:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except (ArgumentError, ValidationError, UnreachableDurationError) as exc:
        code, msg = EXIT_SCHEMA, str(exc)
    except CapacityError as exc:
        code, msg = EXIT_CAPACITY, str(exc)
    except NumericalSingularityError as exc:
        code, msg = EXIT_SINGULAR, str(exc)
    except SubdynError as exc:
        code, msg = EXIT_SINGULAR, str(exc)
    sys.stderr.write(f"subdyn-ske: error: {msg}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
