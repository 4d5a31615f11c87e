"""Batch front end: scenario files in, CSV series and JSON diagnostics out.

Scenario files are JSON documents with fixed sections (domain, material,
time, data, method, tolerances); unknown keys are rejected by schema.  A run
writes one CSV time series with 17 significant digit floats and one JSON
diagnostics document with sorted keys, so identical scenarios produce byte
identical outputs.  Exit codes: 0 success, 1 invalid scenario or failed
verification, 2 data outside the solvable range, 3 spectral hypothesis
failure, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from jsonschema import Draft202012Validator

from .curl_spectral import FieldPair, Mode, ModeTable, SpectralField, build_basis
from .dbf_model import (
    DBF_METHODS,
    GENERALIZED_METHODS,
    DBFScenario,
    FieldHistory,
    GeneralizedScenario,
    HypothesisViolated,
    NeumannDiverges,
    PairSeries,
    RangeViolation,
    material_energy_series,
    solve_dbf,
    solve_generalized,
    uniqueness_energy_probe,
    verify_dbf_equation,
)
from .evo_solver import ZERO_TIME_TOL, NoConvergence, NotContractive
from .weighted_time import MaterialSymbol, NuTooSmall, TimeGrid

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RANGE = 2
EXIT_HYPOTHESIS = 3
EXIT_NO_CONVERGENCE = 4

DEFAULT_TOLERANCES = {
    "fp_tol": 1e-10,
    "max_iter": 64,
    "iv_tol": 1e-8,
    "caus_tol": 1e-10,
    "resid_tol": 1e-6,
    "energy_tol": 1e-12,
    "linearity_tol": 1e-12,
}

_COMPLEX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    ]
}
_KVEC = {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3}
_MODE_ENTRY = {
    "type": "array",
    "prefixItems": [
        _KVEC,
        {"enum": ["plus", "minus", "grad", "const"]},
        _COMPLEX,
        _COMPLEX,
        {"type": "integer", "minimum": 0, "maximum": 2},
    ],
    "minItems": 4,
    "maxItems": 5,
    "items": False,
}
_ROW2 = {"type": "array", "items": _COMPLEX, "minItems": 2, "maxItems": 2}
_MATRIX2 = {"type": "array", "items": _ROW2, "minItems": 2, "maxItems": 2}
_POLY = {"type": "array", "items": _MATRIX2}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "domain": {
            "type": "object",
            "properties": {"K": {"type": "integer", "minimum": 0}},
            "required": ["K"],
            "additionalProperties": False,
        },
        "material": {
            "type": "object",
            "properties": {
                "model": {"enum": ["dbf", "generalized"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "eta": {"type": "number"},
                "kappa0": _MATRIX2,
                "kappa1": _POLY,
                "Mstar0": _MATRIX2,
                "Mstar1": _POLY,
                "k_cross": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
            },
            "required": ["model"],
            "additionalProperties": False,
        },
        "time": {
            "type": "object",
            "properties": {
                "t_start": {"type": "number"},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "n": {"type": "integer", "minimum": 2},
                "pad_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "nu": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["t_start", "dt", "n", "nu"],
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "properties": {
                "W0": {"type": "array", "items": _MODE_ENTRY},
                "source": {
                    "type": "object",
                    "properties": {
                        "waveform": {"enum": ["step", "gaussian", "delayed_step"]},
                        "amplitude": _COMPLEX,
                        "modes": {"type": "array", "items": _MODE_ENTRY},
                        "t0": {"type": "number"},
                        "sigma": {"type": "number", "exclusiveMinimum": 0},
                        "delay": {"type": "number", "minimum": 0},
                    },
                    "required": ["waveform", "amplitude", "modes"],
                    "additionalProperties": False,
                },
            },
            "required": ["W0"],
            "additionalProperties": False,
        },
        "method": {"enum": ["auto", "exact", "fixed_point", "integrator"]},
        "tolerances": {
            "type": "object",
            "properties": {k: {"type": "number"} if k != "max_iter" else {"type": "integer", "minimum": 1}
                           for k in DEFAULT_TOLERANCES},
            "additionalProperties": False,
        },
    },
    "required": ["domain", "material", "time", "data"],
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(SCENARIO_SCHEMA)


class ScenarioError(ValueError):
    """Scenario file rejected before solving."""


def _complex_value(v) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    return complex(v[0], v[1])


def _complex_doc(c: complex):
    if c.imag == 0.0:
        return float(c.real)
    return [float(c.real), float(c.imag)]


def _matrix2(doc) -> np.ndarray:
    return np.array([[_complex_value(x) for x in row] for row in doc], dtype=np.complex128)


def load_scenario_doc(path: str) -> dict:
    """Read, schema-validate, and default-fill a scenario file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON: {exc}") from exc
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ScenarioError(f"{path}: schema violation at {where}: {first.message}")
    return normalize_scenario_doc(doc)


def normalize_scenario_doc(doc: dict) -> dict:
    """Fill defaults so that normalization is idempotent (echo round trip)."""
    out = json.loads(json.dumps(doc))
    out["time"].setdefault("pad_fraction", 0.5)
    out.setdefault("method", "exact" if out["material"]["model"] == "dbf" else "auto")
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(out.get("tolerances", {}))
    out["tolerances"] = tols
    return out


def _mode_position(table: ModeTable, entry: list) -> int:
    k = tuple(int(c) for c in entry[0])
    helicity = entry[1]
    component = entry[4] if len(entry) == 5 else None
    if helicity == "const":
        if k != (0, 0, 0):
            raise ScenarioError(f"const mode must have k = (0,0,0), got {k}")
        if component is None:
            raise ScenarioError("const mode entry needs a component index as 5th element")
    elif component is not None:
        raise ScenarioError(f"component index is only valid for const modes, got one on {helicity}")
    try:
        return table.position(k, helicity, component)
    except KeyError as exc:
        raise ScenarioError(str(exc)) from exc


def _waveform(doc: dict, grid: TimeGrid) -> np.ndarray:
    """Scalar waveform samples, exactly zero before t = 0."""
    t = grid.times
    kind = doc["waveform"]
    extras = {k for k in ("t0", "sigma", "delay") if k in doc}
    if kind == "step":
        if extras:
            raise ScenarioError(f"step waveform takes no extra parameters, got {sorted(extras)}")
        return (t >= -ZERO_TIME_TOL).astype(float)
    if kind == "delayed_step":
        if extras != {"delay"}:
            raise ScenarioError("delayed_step waveform needs exactly the 'delay' parameter")
        return (t >= doc["delay"] - ZERO_TIME_TOL).astype(float)
    if extras != {"t0", "sigma"}:
        raise ScenarioError("gaussian waveform needs exactly the 't0' and 'sigma' parameters")
    w = np.exp(-((t - doc["t0"]) ** 2) / (2.0 * doc["sigma"] ** 2))
    w[t < -ZERO_TIME_TOL] = 0.0
    return w


def build_scenario(doc: dict):
    """Materialize a scenario object from a normalized document."""
    K = doc["domain"]["K"]
    table = build_basis(K)
    time = doc["time"]
    grid = TimeGrid(t_start=time["t_start"], dt=time["dt"], n_samples=time["n"],
                    pad_fraction=time["pad_fraction"])
    if grid.times[0] > ZERO_TIME_TOL or grid.times[-1] < 0.0:
        raise ScenarioError("time window must contain t = 0")
    nu = time["nu"]
    m = table.n_modes
    e0 = np.zeros(m, dtype=np.complex128)
    h0 = np.zeros(m, dtype=np.complex128)
    for entry in doc["data"]["W0"]:
        i = _mode_position(table, entry)
        e0[i] += _complex_value(entry[2])
        h0[i] += _complex_value(entry[3])
    W0 = FieldPair(SpectralField(table, e0), SpectralField(table, h0))

    source = None
    src_doc = doc["data"].get("source")
    if src_doc is not None and src_doc["modes"]:
        w = _waveform(src_doc, grid)
        amp = _complex_value(src_doc["amplitude"])
        se = np.zeros((grid.n_samples, m), dtype=np.complex128)
        sh = np.zeros((grid.n_samples, m), dtype=np.complex128)
        for entry in src_doc["modes"]:
            i = _mode_position(table, entry)
            se[:, i] += amp * _complex_value(entry[2]) * w
            sh[:, i] += amp * _complex_value(entry[3]) * w
        source = PairSeries(table, grid, nu, se, sh)

    mat = doc["material"]
    method = doc["method"]
    if mat["model"] == "dbf":
        extra = sorted(set(mat) & {"kappa0", "kappa1", "Mstar0", "Mstar1", "k_cross"})
        if extra:
            raise ScenarioError(f"dbf material does not take {extra}")
        if mat["eta"] == 0:
            raise ScenarioError("eta must be nonzero")
        if method not in DBF_METHODS:
            raise ScenarioError(f"method {method!r} is not valid for the dbf model")
        return DBFScenario(epsilon=mat["epsilon"], mu=mat["mu"], eta=mat["eta"], nu=nu,
                           K=K, grid=grid, W0=W0, source_J=source)
    extra = sorted(set(mat) & {"epsilon", "mu", "eta"})
    if extra:
        raise ScenarioError(f"generalized material does not take {extra}")
    if "kappa0" not in mat or "Mstar0" not in mat:
        raise ScenarioError("generalized material needs kappa0 and Mstar0")
    if method not in GENERALIZED_METHODS:
        raise ScenarioError(f"method {method!r} is not valid for the generalized model")
    kappa1 = MaterialSymbol(dim=2, poly_coeffs=[_matrix2(c) for c in mat["kappa1"]]) if mat.get("kappa1") else None
    mstar1 = MaterialSymbol(dim=2, poly_coeffs=[_matrix2(c) for c in mat["Mstar1"]]) if mat.get("Mstar1") else None
    k_cross = np.array(mat["k_cross"], dtype=float) if mat.get("k_cross") else None
    return GeneralizedScenario(kappa0=_matrix2(mat["kappa0"]), Mstar0=_matrix2(mat["Mstar0"]),
                               nu=nu, K=K, grid=grid, W0=W0, kappa1=kappa1, Mstar1=mstar1,
                               k_cross=k_cross, source_J=source)


def _solve(scenario, doc: dict) -> FieldHistory:
    tols = doc["tolerances"]
    kwargs = {"fp_tol": tols["fp_tol"], "max_iter": int(tols["max_iter"])}
    if isinstance(scenario, DBFScenario):
        return solve_dbf(scenario, method=doc["method"], **kwargs)
    return solve_generalized(scenario, method=doc["method"], **kwargs)


def _mode_label(mode: Mode) -> str:
    ks = "_".join(f"m{-c}" if c < 0 else str(c) for c in mode.k)
    label = f"k{ks}_{mode.helicity}"
    if mode.component_index is not None:
        label += f"_c{mode.component_index}"
    return label


def _tracked_indices(history: FieldHistory, scenario) -> list:
    """Table positions with any nonzero data or field, in table order."""
    active = np.zeros(history.table.n_modes, dtype=bool)
    for arr in (history.E, history.H, history.D, history.B):
        active |= np.any(arr != 0, axis=0)
    active |= scenario.W0.e_part.coeffs != 0
    active |= scenario.W0.h_part.coeffs != 0
    if scenario.source_J is not None:
        active |= np.any(scenario.source_J.e != 0, axis=0)
        active |= np.any(scenario.source_J.h != 0, axis=0)
    return [int(i) for i in np.nonzero(active)[0]]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_run_output(history: FieldHistory, scenario, doc: dict, out_dir: str, stem: str) -> tuple[str, str]:
    """Write the CSV series and JSON diagnostics; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    tracked = _tracked_indices(history, scenario)
    labels = [_mode_label(history.table.modes[i]) for i in tracked]
    energy = material_energy_series(history, scenario)
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    columns = ["t"]
    for label in labels:
        for fld in ("e", "h", "d", "b"):
            columns += [f"{label}_{fld}_re", f"{label}_{fld}_im"]
    columns.append("energy")
    arrays = {"e": history.E, "h": history.H, "d": history.D, "b": history.B}
    times = history.grid.times
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in range(history.grid.n_samples):
            vals = [_fmt(times[row])]
            for i in tracked:
                for fld in ("e", "h", "d", "b"):
                    c = arrays[fld][row, i]
                    vals += [_fmt(c.real), _fmt(c.imag)]
            vals.append(_fmt(energy[row]))
            fh.write(",".join(vals) + "\n")
    json_path = os.path.join(out_dir, f"{stem}.json")
    payload = {
        "model": doc["material"]["model"],
        "method": doc["method"],
        "csv_file": os.path.basename(csv_path),
        "columns": columns,
        "tracked_modes": [
            {
                "label": labels[j],
                "k": list(history.table.modes[i].k),
                "helicity": history.table.modes[i].helicity,
                "component_index": history.table.modes[i].component_index,
                "eigenvalue": float(history.table.eigenvalues[i]),
            }
            for j, i in enumerate(tracked)
        ],
        "grid": {"t_start": history.grid.t_start, "dt": history.grid.dt,
                 "n": history.grid.n_samples, "pad_fraction": history.grid.pad_fraction},
        "nu": history.nu,
        "energy_initial": float(energy[np.argmax(times >= -ZERO_TIME_TOL)]),
        "energy_final": float(energy[-1]),
        "diagnostics": history.diagnostics,
    }
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return csv_path, json_path


def _run_solution(scenario_path: str, out_dir: str, echo_config: bool = False, stem: str | None = None):
    """Shared run path; returns (exit_code, history or None, scenario, doc)."""
    doc = load_scenario_doc(scenario_path)
    scenario = build_scenario(doc)
    if echo_config:
        print(json.dumps(doc, sort_keys=True, indent=2))
    history = _solve(scenario, doc)
    stem = stem or os.path.splitext(os.path.basename(scenario_path))[0]
    csv_path, json_path = write_run_output(history, scenario, doc, out_dir, stem)
    print(f"wrote {csv_path} and {json_path}")
    return history, scenario, doc


def cmd_run(scenario_path: str, out_dir: str, echo_config: bool = False) -> int:
    """Solve one scenario file and emit its run output."""
    try:
        _run_solution(scenario_path, out_dir, echo_config)
    except (ScenarioError, ValueError) as exc:
        if isinstance(exc, RangeViolation):
            print(f"range condition failed: {exc}", file=sys.stderr)
            return EXIT_RANGE
        if isinstance(exc, HypothesisViolated):
            print(f"hypothesis failed: {exc}", file=sys.stderr)
            return EXIT_HYPOTHESIS
        if isinstance(exc, (NotContractive, NuTooSmall)):
            print(f"solver cannot converge: {exc}", file=sys.stderr)
            return EXIT_NO_CONVERGENCE
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NeumannDiverges, NoConvergence) as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except FileNotFoundError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def _observed_omega(series: np.ndarray, times: np.ndarray) -> float:
    """Angular frequency from interpolated zero crossings of the real part.

    Uses pi over the mean crossing spacing; returns 0.0 when fewer than two
    crossings are found.
    """
    s = np.real(series)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if idx.size < 2:
        return 0.0
    frac = s[idx] / (s[idx] - s[idx + 1])
    crossings = times[idx] + frac * (times[idx + 1] - times[idx])
    return float(np.pi * (crossings.size - 1) / (crossings[-1] - crossings[0]))


def cmd_verify(scenario_path: str) -> int:
    """Run the invariant suite for one scenario and print a pass/fail table."""
    try:
        doc = load_scenario_doc(scenario_path)
        scenario = build_scenario(doc)
        history = _solve(scenario, doc)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RangeViolation, HypothesisViolated, NeumannDiverges, NoConvergence,
            NotContractive, NuTooSmall, ValueError) as exc:
        print(f"FAIL: solve ({exc})", file=sys.stderr)
        return EXIT_INVALID

    tols = doc["tolerances"]
    d = history.diagnostics
    is_dbf = isinstance(scenario, DBFScenario)
    caus_tol = tols["caus_tol"] if doc["method"] in ("exact", "integrator") else max(
        tols["caus_tol"], tols["fp_tol"])
    checks: list[tuple[str, float, float]] = []
    checks.append(("initial_value", d["initial_value_error"], tols["iv_tol"]))
    checks.append(("causality", d["causality_sup"], caus_tol))
    checks.append(("weak_residual", d["weak_residual"], tols["resid_tol"]))
    if is_dbf:
        table = scenario.table
        kernel = table.kernel_mask(scenario.eta)
        if np.any(kernel):
            proj_err = float(np.max(np.abs(table.eigenvalues[kernel] + 1.0 / scenario.eta)))
        else:
            proj_err = 0.0
        checks.append(("projector_algebra", proj_err, 1e-9 / abs(scenario.eta)))
    zero_data = (scenario.W0.norm() == 0.0) and (
        scenario.source_J is None or scenario.source_J.max_abs() == 0.0)
    if zero_data:
        if is_dbf:
            checks.append(("uniqueness_energy", uniqueness_energy_probe(history, scenario), tols["energy_tol"]))
        else:
            field_sup = max(float(np.max(np.abs(a), initial=0.0))
                            for a in (history.E, history.H, history.D, history.B))
            checks.append(("uniqueness_energy", field_sup, tols["energy_tol"]))
    else:
        doubled = _scale_scenario(scenario, 2.0)
        h2 = _solve(doubled, doc)
        scale = max(float(np.max(np.abs(history.E))), float(np.max(np.abs(history.H))), 1e-300)
        lin = max(float(np.max(np.abs(h2.E - 2.0 * history.E))),
                  float(np.max(np.abs(h2.H - 2.0 * history.H)))) / scale
        lin_tol = tols["linearity_tol"] if doc["method"] != "fixed_point" else max(
            tols["linearity_tol"], 100.0 * tols["fp_tol"] / scale)
        checks.append(("linearity", lin, lin_tol))
    if is_dbf and scenario.source_J is None and doc["method"] == "exact" and not zero_data:
        energy = material_energy_series(history, scenario)
        causal = history.grid.times >= -ZERO_TIME_TOL
        en = energy[causal]
        drift = float(np.max(np.abs(en - en[0]))) / max(float(en[0]), 1e-300)
        checks.append(("energy_conservation", drift, max(tols["energy_tol"], 1e-12)))

    width = max(len(name) for name, _, _ in checks)
    failed = [name for name, value, tol in checks if not value <= tol]
    print(f"{'check'.ljust(width)}  {'value':>12}  {'tolerance':>12}  status")
    for name, value, tol in checks:
        status = "PASS" if value <= tol else "FAIL"
        print(f"{name.ljust(width)}  {value:12.4e}  {tol:12.4e}  {status}")
    if failed:
        print(f"FAIL: {failed[0]}")
        return EXIT_INVALID
    print("all checks passed")
    return EXIT_OK


def _scale_scenario(scenario, factor: float):
    """Same scenario with data multiplied by factor."""
    W0 = scenario.W0.with_coeffs(factor * scenario.W0.e_part.coeffs, factor * scenario.W0.h_part.coeffs)
    src = scenario.source_J
    if src is not None:
        src = PairSeries(src.table, src.grid, src.nu, factor * src.e, factor * src.h)
    if isinstance(scenario, DBFScenario):
        return DBFScenario(scenario.epsilon, scenario.mu, scenario.eta, scenario.nu,
                           scenario.K, scenario.grid, W0, src)
    return GeneralizedScenario(scenario.kappa0, scenario.Mstar0, scenario.nu, scenario.K,
                               scenario.grid, W0, scenario.kappa1, scenario.Mstar1,
                               scenario.k_cross, src)


def cmd_sweep(scenario_path: str, param: str, values: list, out_dir: str) -> int:
    """Re-run one scenario across parameter values and summarize."""
    if param not in ("eta", "nu", "dt"):
        print(f"sweep parameter must be eta, nu, or dt, got {param!r}", file=sys.stderr)
        return EXIT_INVALID
    try:
        base = load_scenario_doc(scenario_path)
        base_scenario = build_scenario(base)
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if param == "eta" and base["material"]["model"] != "dbf":
        print("eta sweeps require the dbf material model", file=sys.stderr)
        return EXIT_INVALID

    table = base_scenario.table
    data_idx = sorted({int(i) for i in np.nonzero(
        (base_scenario.W0.e_part.coeffs != 0) | (base_scenario.W0.h_part.coeffs != 0))[0]})
    labels = [_mode_label(table.modes[i]) for i in data_idx]
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    successes = 0
    for pos, value in enumerate(values):
        doc = json.loads(json.dumps(base))
        if param == "eta":
            doc["material"]["eta"] = value
        elif param == "nu":
            doc["time"]["nu"] = value
        else:
            doc["time"]["dt"] = value
        stem = f"{param}_{pos:03d}"
        sub = os.path.join(out_dir, stem)
        row = {"param": param, "value": value, "exit_code": EXIT_OK,
               "weak_residual": "", "initial_value_error": "", "iterations": ""}
        for label in labels:
            row[f"omega_{label}"] = ""
        try:
            scenario = build_scenario(doc)
            history = _solve(scenario, doc)
            write_run_output(history, scenario, doc, sub, stem)
            d = history.diagnostics
            row["weak_residual"] = _fmt(d["weak_residual"])
            row["initial_value_error"] = _fmt(d["initial_value_error"])
            row["iterations"] = str(d["iterations"])
            causal = history.grid.times >= -ZERO_TIME_TOL
            core = causal & (history.grid.times < history.grid.core_end_time)
            for label, i in zip(labels, data_idx):
                row[f"omega_{label}"] = _fmt(_observed_omega(history.E[core, i], history.grid.times[core]))
            successes += 1
        except RangeViolation as exc:
            row["exit_code"] = EXIT_RANGE
            print(f"value {value}: range condition failed: {exc}", file=sys.stderr)
        except HypothesisViolated as exc:
            row["exit_code"] = EXIT_HYPOTHESIS
            print(f"value {value}: hypothesis failed: {exc}", file=sys.stderr)
        except (NeumannDiverges, NoConvergence, NotContractive, NuTooSmall) as exc:
            row["exit_code"] = EXIT_NO_CONVERGENCE
            print(f"value {value}: solver did not converge: {exc}", file=sys.stderr)
        except (ScenarioError, ValueError) as exc:
            row["exit_code"] = EXIT_INVALID
            print(f"value {value}: invalid: {exc}", file=sys.stderr)
        rows.append(row)

    summary = os.path.join(out_dir, f"sweep_{param}.csv")
    columns = ["param", "value", "exit_code", "weak_residual", "initial_value_error", "iterations"]
    columns += [f"omega_{label}" for label in labels]
    with open(summary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) if c == "value" else str(row[c]) for c in columns) + "\n")
    print(f"wrote {summary} ({successes}/{len(values)} values solved)")
    if not values:
        return EXIT_OK
    return EXIT_OK if successes >= 1 else EXIT_INVALID


def cmd_basis(K: int, out_path: str) -> int:
    """Emit the mode table for truncation K as JSON."""
    table = build_basis(K)
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(table.to_json())
        fh.write("\n")
    print(f"wrote {out_path} ({table.n_modes} modes)")
    return EXIT_OK


def main(argv: list | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dbf",
        description="Spectral simulator for chiral electromagnetic media on the periodic torus.",
        epilog="Set DBF_THREADS to cap per-mode solve parallelism.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve a scenario file and write CSV + JSON output")
    p_run.add_argument("scenario", help="path to a scenario JSON file")
    p_run.add_argument("-o", "--out-dir", default="out", help="output directory (default: out)")
    p_run.add_argument("--echo-config", action="store_true",
                       help="print the normalized scenario document before solving")

    p_verify = sub.add_parser("verify", help="run the invariant suite for a scenario")
    p_verify.add_argument("scenario", help="path to a scenario JSON file")

    p_sweep = sub.add_parser("sweep", help="re-run a scenario across parameter values")
    p_sweep.add_argument("scenario", help="path to a scenario JSON file")
    p_sweep.add_argument("--param", required=True, choices=["eta", "nu", "dt"])
    p_sweep.add_argument("--values", required=True, nargs="+", type=float)
    p_sweep.add_argument("-o", "--out-dir", default="sweep", help="output directory (default: sweep)")

    p_basis = sub.add_parser("basis", help="emit the curl eigenmode table as JSON")
    p_basis.add_argument("--K", required=True, type=int, help="truncation radius")
    p_basis.add_argument("-o", "--out", default="basis.json", help="output file (default: basis.json)")

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.scenario, args.out_dir, args.echo_config)
    if args.command == "verify":
        return cmd_verify(args.scenario)
    if args.command == "sweep":
        return cmd_sweep(args.scenario, args.param, args.values, args.out_dir)
    return cmd_basis(args.K, args.out)


if __name__ == "__main__":
    sys.exit(main())
