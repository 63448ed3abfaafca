"""Config-driven pipeline: run stages, write artifacts, summarize.

Artifacts are deterministic: JSON is dumped with sorted keys, complex values
are encoded as [re, im] pairs, floats in CSV carry 17 significant digits, and
no artifact embeds a timestamp.  Re-running with an identical config and seed
reproduces every payload byte for byte.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .functionals import NotConverged
from .gauges import (GaugeSpec, conjugate_gauge, gauge_norm, holder_check,
                     norm_subgradient, operator_norm)
from .lebesgue import DecompositionReport, decompose
from .qau import (CertificationError, MonotonizationError, UnitSchedule,
                  build_schedule, k_estimate)
from .sampling import generate_test_set

STAGES = ("gauge-check", "k-estimate", "schedule", "decompose")
SCHEMA_VERSION = 1
_CHECK_DIMS = (2, 3, 4, 5, 6, 7, 8)
_CHECK_SAMPLES = 24
_REL_TOL = 1e-9


def _c(value: complex) -> list[float]:
    return [float(value.real), float(value.imag)]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_json(path: Path, payload: dict):
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def _random_unitary(rng, dim: int) -> np.ndarray:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _gauge_battery(gauge: GaugeSpec, seed: int) -> dict:
    """Axiom and duality checks on seeded matrices; returns failure counts."""
    rng = np.random.default_rng(seed)
    failures = {"triangle": 0, "unitary": 0, "ideal": 0, "holder": 0,
                "involution": 0, "subgradient": 0}
    back = conjugate_gauge(conjugate_gauge(gauge))
    if (back.family, back.p, back.k) != (gauge.family, gauge.p, gauge.k):
        failures["involution"] = 1
    dual = conjugate_gauge(gauge)
    for i in range(_CHECK_SAMPLES):
        dim = _CHECK_DIMS[i % len(_CHECK_DIMS)]
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        b = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))

        lhs = gauge_norm(gauge, a + b)
        rhs = gauge_norm(gauge, a) + gauge_norm(gauge, b)
        if lhs > rhs + _REL_TOL * (1.0 + rhs):
            failures["triangle"] += 1

        u = _random_unitary(rng, dim)
        v = _random_unitary(rng, dim)
        na = gauge_norm(gauge, a)
        if abs(gauge_norm(gauge, u @ a @ v) - na) > _REL_TOL * (1.0 + na):
            failures["unitary"] += 1

        rhs = operator_norm(a) * gauge_norm(gauge, m) * operator_norm(b)
        if gauge_norm(gauge, a @ m @ b) > rhs + _REL_TOL * (1.0 + rhs):
            failures["ideal"] += 1

        if not holder_check(a, b, gauge).ok:
            failures["holder"] += 1

        d = norm_subgradient(gauge, a)
        pairing = float(np.real(np.vdot(d, a)))
        if abs(pairing - na) > 1e-8 * (1.0 + na):
            failures["subgradient"] += 1
        elif gauge_norm(dual, d) > 1.0 + 1e-8:
            failures["subgradient"] += 1
    return failures


def stage_gauge_check(config: ExperimentConfig) -> dict:
    checks = []
    for gauge in config.gauges:
        failures = _gauge_battery(gauge, config.seed)
        checks.append({
            "gauge": gauge.label,
            "family": gauge.family,
            "samples": _CHECK_SAMPLES,
            "failures": failures,
            "passed": not any(failures.values()),
        })
    return {"schema_version": SCHEMA_VERSION, "seed": config.seed,
            "checks": checks, "passed": all(c["passed"] for c in checks)}


def stage_k_estimate(config: ExperimentConfig, jobs: int = 1) -> dict:
    if not config.floors:
        raise ConfigError("windows.floors", "required for the k-estimate stage")
    if not config.caps:
        raise ConfigError("windows.caps", "required for the k-estimate stage")
    tau = config.instantiate()
    gauge = config.primary_gauge
    table = k_estimate(tau, gauge, config.floors, config.caps,
                       params=config.solver, jobs=jobs)
    violations = list(table.monotonicity_violations())
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "model": config.model.name,
        "dimension": config.dimension,
        "gauge": gauge.label,
        "floors": list(table.floors),
        "caps": list(table.caps),
        "cells": [{"m": c.floor_m, "r": c.cap_r, "beta": c.beta,
                   "iterations": c.iterations, "status": c.status}
                  for c in table.cells],
        "estimate": table.estimate,
        "monotonicity_violations": violations,
        "passed": not violations,
    }


def _build_configured_schedule(config: ExperimentConfig) -> UnitSchedule:
    if not config.schedule_windows:
        raise ConfigError("windows.schedule", "required for this stage")
    tau = config.instantiate()
    return build_schedule(tau, config.primary_gauge, config.schedule_windows,
                          mode=config.schedule_mode, params=config.solver)


def stage_schedule(config: ExperimentConfig) -> dict:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "model": config.model.name,
        "dimension": config.dimension,
        "gauge": config.primary_gauge.label,
        "mode": config.schedule_mode,
        "steps": [],
        "passed": True,
        "diagnostics": [],
    }
    try:
        schedule = _build_configured_schedule(config)
    except (CertificationError, MonotonizationError, ValueError) as err:
        payload["passed"] = False
        payload["diagnostics"] = [str(err)]
        return payload
    for unit, norm in zip(schedule.steps, schedule.commutator_norms):
        cert = unit.certificate
        payload["steps"].append({
            "floor": unit.floor_m,
            "cap": unit.cap_r,
            "commutator_norm": norm,
            "min_eigenvalue": cert.min_eigenvalue,
            "max_eigenvalue": cert.max_eigenvalue,
            "floor_residual": cert.floor_residual,
            "support_leak": cert.support_leak,
        })
    return payload


def _report_payload(report: DecompositionReport) -> dict:
    return {
        "phi_id": report.phi_id,
        "schedule_id": report.schedule_id,
        "per_S": [{
            "S_id": rec.s_id,
            "sequence": [_c(v) for v in rec.sequence],
            "limit": None if rec.limit is None else _c(rec.limit),
            "bounds": list(rec.bounds),
            "gaps": list(rec.gaps),
            "sound": rec.sound,
        } for rec in report.per_s],
        "residuals": [{"S_id": sid, "value": value} for sid, value in report.residuals],
        "additivity": {
            "lower": report.additivity.lower,
            "upper_trace": report.additivity.upper_trace,
            "upper_tail": report.additivity.upper_tail,
            "skipped": report.additivity.skipped,
            "ok": report.additivity.ok,
        },
        "idempotence_gap": report.idempotence_gap,
        "status": report.status,
        "diagnostics": list(report.diagnostics),
    }


def stage_decompose(config: ExperimentConfig) -> dict:
    if not config.functionals:
        raise ConfigError("functionals", "required for the decompose stage")
    tau = config.instantiate()
    gauge = config.primary_gauge
    schedule = _build_configured_schedule(config)
    test_set = generate_test_set(config.sample, tau, gauge)
    reports = []
    for i, phi in enumerate(config.functionals):
        report = decompose(phi, schedule, tau, gauge, test_set,
                           phi_id=phi.label or f"phi-{i}",
                           schedule_id=f"{config.schedule_mode}-{len(schedule)}")
        reports.append(_report_payload(report))
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": config.seed,
        "model": config.model.name,
        "dimension": config.dimension,
        "gauge": gauge.label,
        "reports": reports,
        "passed": all(r["status"] == "ok" for r in reports),
    }


_STAGE_STEMS = {"gauge-check": "gauge_checks", "k-estimate": "k_estimate",
                "schedule": "schedule", "decompose": "decomposition"}


def _write_stage(out: Path, name: str, payload: dict, formats) -> list[str]:
    written = []
    base = _STAGE_STEMS[name]
    if "json" in formats:
        write_json(out / f"{base}.json", payload)
        written.append(f"{base}.json")
    if "csv" in formats:
        rows: list = []
        if name == "gauge-check":
            header = ["gauge", "samples", "triangle", "unitary", "ideal",
                      "holder", "involution", "subgradient", "passed"]
            for c in payload["checks"]:
                f = c["failures"]
                rows.append([c["gauge"], c["samples"], f["triangle"], f["unitary"],
                             f["ideal"], f["holder"], f["involution"],
                             f["subgradient"], c["passed"]])
        elif name == "k-estimate":
            header = ["m", "r", "beta", "iterations", "status"]
            rows = [[c["m"], c["r"], c["beta"], c["iterations"], c["status"]]
                    for c in payload["cells"]]
        elif name == "schedule":
            header = ["floor", "cap", "commutator_norm"]
            rows = [[s["floor"], s["cap"], s["commutator_norm"]]
                    for s in payload["steps"]]
        else:
            header = ["phi_id", "S_id", "step", "value_re", "value_im", "bound", "gap"]
            for rep in payload["reports"]:
                for rec in rep["per_S"]:
                    for k, value in enumerate(rec["sequence"], start=1):
                        bound = rec["bounds"][k - 1] if k <= len(rec["bounds"]) else ""
                        gap = rec["gaps"][k - 1] if k <= len(rec["gaps"]) else ""
                        rows.append([rep["phi_id"], rec["S_id"], k,
                                     value[0], value[1], bound, gap])
        write_csv(out / f"{base}.csv", header, rows)
        written.append(f"{base}.csv")
    return written


def run_experiment(config: ExperimentConfig, out_dir, stages=None,
                   jobs: int = 1) -> dict:
    """Run the requested stages, write their artifacts, return the summary.

    Stages default to the full pipeline and always execute in pipeline
    order.  The summary payload is also written to summary.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if stages is None:
        stages = STAGES
    for stage in stages:
        if stage not in STAGES:
            raise ConfigError("<stages>", f"unknown stage {stage!r}")

    summary: dict = {"schema_version": SCHEMA_VERSION, "seed": config.seed,
                     "stages": {}, "passed": True}
    artifacts: list[str] = []
    for stage in STAGES:
        if stage not in stages:
            continue
        if stage == "gauge-check":
            payload = stage_gauge_check(config)
        elif stage == "k-estimate":
            payload = stage_k_estimate(config, jobs=jobs)
        elif stage == "schedule":
            payload = stage_schedule(config)
        else:
            payload = stage_decompose(config)
        files = _write_stage(out, stage, payload, config.formats)
        artifacts.extend(files)
        summary["stages"][stage] = {"passed": payload["passed"], "artifacts": files}
        summary["passed"] = summary["passed"] and payload["passed"]
    summary["artifacts"] = artifacts
    write_json(out / "summary.json", summary)
    return summary


def _safe_name(raw: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", raw)


def render_report(out_dir) -> dict:
    """Emit plain-text plot data from the artifacts present in out_dir.

    Per decomposition record: one file with columns (k, value, bound) where
    value is the real part of the recovery sequence, and one with columns
    (k, gap, bound) for bound-versus-gap curves.  The k-estimate table is
    flattened to (m, r, beta) triples.  Missing artifacts are skipped with a
    notice.
    """
    out = Path(out_dir)
    written: list[str] = []
    notices: list[str] = []

    k_path = out / "k_estimate.json"
    if k_path.exists():
        payload = json.loads(k_path.read_text(encoding="utf-8"))
        lines = ["m r beta"]
        lines.extend(f"{c['m']} {c['r']} {_fmt(float(c['beta']))}"
                     for c in payload["cells"])
        name = "k_estimate.dat"
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(name)
    else:
        notices.append("no k-estimate artifact; skipped")

    d_path = out / "decomposition.json"
    if d_path.exists():
        payload = json.loads(d_path.read_text(encoding="utf-8"))
        for rep in payload["reports"]:
            for rec in rep["per_S"]:
                stem = f"decomposition_{_safe_name(rep['phi_id'])}_{_safe_name(rec['S_id'])}"
                lines = ["k value bound"]
                gap_lines = ["k gap bound"]
                for k, value in enumerate(rec["sequence"], start=1):
                    bound = float(rec["bounds"][k - 1])
                    lines.append(f"{k} {_fmt(float(value[0]))} {_fmt(bound)}")
                    gap = float(rec["gaps"][k - 1])
                    gap_lines.append(f"{k} {_fmt(gap)} {_fmt(bound)}")
                (out / f"{stem}.dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
                (out / f"{stem}_gap.dat").write_text("\n".join(gap_lines) + "\n",
                                                     encoding="utf-8")
                written.extend([f"{stem}.dat", f"{stem}_gap.dat"])
    else:
        notices.append("no decomposition artifact; skipped")

    return {"written": written, "notices": notices}
