"""Experiment runner: back-to-back OSNR sweep, distance sweep and self-test.

Configs are JSON documents with a ``schema_version`` field.  Unknown keys
are rejected and all validation problems are reported together.  Results
are CSV tables, one row per sweep point, written in sweep order.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import PropagationConfig, noise_loading, propagate_normalized, transmit
from .core import (NORMALIZED, DualPolSignal, FiberLink, TimeGrid, denormalize,
                   make_normalization, relative_l2)
from .darboux import one_soliton, synthesize
from .nft import find_eigenvalues, scatter
from .transceiver import (ReceiverConfig, SignalingPlan, demap_and_count, demodulate,
                          map_bits, modulate, prbs11)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("btb_osnr", "distance_sweep", "roundtrip_selftest")
WORKERS_ENV = "MANAKOV_NFDM_WORKERS"

CSV_COLUMNS = ("ber_b1_l1", "ber_b2_l1", "ber_b1_l2", "ber_b2_l2", "ber_avg", "erasures",
               "n_bits", "seed", "config_hash")

DEFAULT_TOLERANCES = {
    "round_trip_lambda": 5e-5,
    "round_trip_phase": 2e-4,
    "trace_formula": 1e-4,
    "integrability_lambda": 1e-4,
    "integrability_b_modulus": 1e-3,
    "convergence_min": 3.0,
    "convergence_max": 5.0,
}


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "btb_osnr"
    signaling: SignalingPlan = field(default_factory=SignalingPlan)
    link: FiberLink = field(default_factory=FiberLink)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    propagation: PropagationConfig = field(default_factory=lambda: PropagationConfig(steps_per_span=50))
    sweep: tuple = (10.0, 14.0, 18.0, 22.0)
    n_bits: int = 81880
    seed: int = 1
    prbs_seed: int = 0x7FF
    launch_power_dbm: float | None = None
    lossless_path_avg: bool = True
    osnr_ref_bandwidth: float = 12.5e9
    tolerances: dict = field(default_factory=dict)
    output_path: str | None = None

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    @property
    def n_symbols(self) -> int:
        return self.n_bits // 8

    def to_dict(self) -> dict:
        sig = self.signaling
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "signaling": {
                "baud": sig.baud,
                "eigenvalues": [[e.real, e.imag] for e in sig.eigenvalues],
                "b_modulus": list(sig.b_modulus),
                "base_rotation": sig.base_rotation,
                "slot_width": sig.slot_width,
                "samples_per_slot": sig.samples_per_slot,
            },
            "link": dataclasses.asdict(self.link),
            "receiver": dataclasses.asdict(self.receiver),
            "propagation": dataclasses.asdict(self.propagation),
            "sweep": list(self.sweep),
            "n_bits": self.n_bits,
            "seed": self.seed,
            "prbs_seed": self.prbs_seed,
            "launch_power_dbm": self.launch_power_dbm,
            "lossless_path_avg": self.lossless_path_avg,
            "osnr_ref_bandwidth": self.osnr_ref_bandwidth,
            "tolerances": dict(self.tolerances),
            "output_path": self.output_path,
        }

    def hash(self) -> str:
        """Short digest of everything that affects results (not seed or output path)."""
        d = self.to_dict()
        d.pop("seed")
        d.pop("output_path")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _section(name, data, cls, problems, convert=None):
    """Build dataclass ``cls`` from dict ``data``, recording problems."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        problems.append(f"{name}: expected an object")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    for k in unknown:
        problems.append(f"{name}.{k}: unknown key")
    kw = {k: v for k, v in data.items() if k in names}
    if convert:
        kw = convert(kw, problems)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
        return cls()


def _convert_signaling(kw, problems):
    if "eigenvalues" in kw:
        try:
            kw["eigenvalues"] = tuple(complex(*e) if isinstance(e, (list, tuple)) else complex(0, e)
                                      for e in kw["eigenvalues"])
        except TypeError:
            problems.append("signaling.eigenvalues: expected [re, im] pairs or imaginary parts")
            kw.pop("eigenvalues")
    if "b_modulus" in kw:
        kw["b_modulus"] = tuple(kw["b_modulus"])
    return kw


def config_from_dict(d: dict) -> ExperimentConfig:
    problems = []
    if not isinstance(d, dict):
        raise ConfigError(["top level: expected an object"])
    if d.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {d.get('schema_version')!r}")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} | {"schema_version"}
    for k in sorted(set(d) - top):
        problems.append(f"{k}: unknown key")

    kw = {}
    kw["signaling"] = _section("signaling", d.get("signaling"), SignalingPlan, problems,
                               _convert_signaling)
    kw["link"] = _section("link", d.get("link"), FiberLink, problems)
    kw["receiver"] = _section("receiver", d.get("receiver"), ReceiverConfig, problems)
    if "propagation" in d:
        kw["propagation"] = _section("propagation", d.get("propagation"), PropagationConfig, problems)

    mode = d.get("mode", "btb_osnr")
    if mode not in MODES:
        problems.append(f"mode: must be one of {MODES}, got {mode!r}")
    kw["mode"] = mode
    if "sweep" in d:
        sw = d["sweep"]
        if not isinstance(sw, list) or not sw:
            problems.append("sweep: must be a non-empty list")
        elif not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sw):
            problems.append("sweep: entries must be numbers")
        elif mode == "distance_sweep" and not all(float(x).is_integer() and x >= 0 for x in sw):
            problems.append("sweep: span counts must be non-negative integers")
        else:
            kw["sweep"] = tuple(int(x) if mode == "distance_sweep" else float(x) for x in sw)
    elif mode == "distance_sweep":
        kw["sweep"] = (0, 1, 2, 3, 4, 5)
    for key, typ in (("n_bits", int), ("seed", int), ("prbs_seed", int)):
        if key in d:
            v = d[key]
            if not isinstance(v, int) or isinstance(v, bool):
                problems.append(f"{key}: must be an integer")
            else:
                kw[key] = v
    if kw.get("n_bits", 8) < 8:
        problems.append("n_bits: must be >= 8")
    if kw.get("seed", 0) < 0:
        problems.append("seed: must be non-negative")
    if not 0 < kw.get("prbs_seed", 1) < 2048:
        problems.append("prbs_seed: must be a nonzero 11-bit value")
    if "launch_power_dbm" in d:
        v = d["launch_power_dbm"]
        if v is not None and not isinstance(v, (int, float)):
            problems.append("launch_power_dbm: must be a number or null")
        else:
            kw["launch_power_dbm"] = None if v is None else float(v)
    if "lossless_path_avg" in d:
        if not isinstance(d["lossless_path_avg"], bool):
            problems.append("lossless_path_avg: must be true or false")
        else:
            kw["lossless_path_avg"] = d["lossless_path_avg"]
    if "osnr_ref_bandwidth" in d:
        v = d["osnr_ref_bandwidth"]
        if not isinstance(v, (int, float)) or not v > 0:
            problems.append("osnr_ref_bandwidth: must be a positive number")
        else:
            kw["osnr_ref_bandwidth"] = float(v)
    if "tolerances" in d:
        tol = d["tolerances"]
        if not isinstance(tol, dict):
            problems.append("tolerances: expected an object")
        else:
            for k in sorted(set(tol) - set(DEFAULT_TOLERANCES)):
                problems.append(f"tolerances.{k}: unknown key")
            kw["tolerances"] = {k: float(v) for k, v in tol.items() if k in DEFAULT_TOLERANCES}
    if "output_path" in d:
        kw["output_path"] = d["output_path"]
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    return config_from_dict(d)


def point_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Independent, order-free seed for sweep point ``index``."""
    return np.random.SeedSequence([int(seed), int(index)])


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- pipelines

def _frame(cfg: ExperimentConfig):
    """Bits, normalization map, physical tx frame and the ideal (INFT) power."""
    n_sym = cfg.n_symbols
    bits = prbs11(cfg.prbs_seed, 8 * n_sym)
    nmap = make_normalization(cfg.link, cfg.signaling.T0, cfg.lossless_path_avg)
    tx = denormalize(modulate(bits, cfg.signaling), nmap)
    ideal = tx.mean_power()
    if cfg.launch_power_dbm is not None:
        g = np.sqrt(1e-3 * 10 ** (cfg.launch_power_dbm / 10) / ideal)
        tx = tx.replace(q1=tx.q1 * g, q2=tx.q2 * g)
    return bits, nmap, tx, ideal


def _receive(rx, cfg, nmap, ideal, bits):
    demod = demodulate(rx, cfg.signaling, nmap, cfg.receiver, ideal_power=ideal, pilot_bits=bits)
    skip = min(cfg.receiver.n_pilots, len(demod.spectra))
    report = demap_and_count(demod.spectra, bits, cfg.signaling, skip_symbols=skip)
    return report, demod


def _btb_point(cfg: ExperimentConfig, index: int, with_symbols: bool = False):
    bits, nmap, tx, ideal = _frame(cfg)
    osnr = cfg.sweep[index]
    rng = np.random.default_rng(point_seed(cfg.seed, index))
    rx = noise_loading(tx, osnr, cfg.osnr_ref_bandwidth, rng)
    report, demod = _receive(rx, cfg, nmap, ideal, bits)
    return report, (demod if with_symbols else None)


def _sweep_point(cfg: ExperimentConfig, index: int, with_symbols: bool = False):
    bits, nmap, tx, ideal = _frame(cfg)
    n_spans = int(cfg.sweep[index])
    rng = np.random.default_rng(point_seed(cfg.seed, index))
    rx = transmit(tx, cfg.link, n_spans, cfg.propagation, seed=rng)
    report, demod = _receive(rx, cfg, nmap, ideal, bits)
    return report, (demod if with_symbols else None)


def _row(x_name, x_value, report, cfg):
    ber = report.ber
    return {x_name: x_value, "ber_b1_l1": float(ber[0]), "ber_b2_l1": float(ber[1]),
            "ber_b1_l2": float(ber[2]), "ber_b2_l2": float(ber[3]),
            "ber_avg": report.ber_avg, "erasures": int(report.erasures),
            "n_bits": report.n_bits, "seed": cfg.seed, "config_hash": cfg.hash()}


def _run_points(fn, cfg, workers):
    idx = list(range(len(cfg.sweep)))
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(idx) == 1:
        return [fn(cfg, i)[0] for i in idx]
    with ProcessPoolExecutor(max_workers=min(workers, len(idx))) as ex:
        return [r for r, _ in ex.map(fn, [cfg] * len(idx), idx)]


def run_btb(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """One row per OSNR point: modulate, noise-load, receive, count."""
    if cfg.mode != "btb_osnr":
        raise ConfigError([f"mode: run_btb needs btb_osnr, got {cfg.mode!r}"])
    reports = _run_points(_btb_point, cfg, workers)
    return [_row("osnr_db", float(x), r, cfg) for x, r in zip(cfg.sweep, reports)]


def run_distance_sweep(cfg: ExperimentConfig, workers: int | None = None) -> list[dict]:
    """One row per span count; the distance column is span count x span length."""
    if cfg.mode != "distance_sweep":
        raise ConfigError([f"mode: run_distance_sweep needs distance_sweep, got {cfg.mode!r}"])
    reports = _run_points(_sweep_point, cfg, workers)
    return [_row("distance_km", int(n) * cfg.link.span_length, r, cfg)
            for n, r in zip(cfg.sweep, reports)]


def dump_constellations(cfg: ExperimentConfig, index: int = 0) -> list[dict]:
    """Per-symbol complex coefficients before decision for one sweep point."""
    fn = _btb_point if cfg.mode == "btb_osnr" else _sweep_point
    _, demod = fn(cfg, index, with_symbols=True)
    rows = []
    names = ("b1_l1", "b2_l1", "b1_l2", "b2_l2")
    for s in range(demod.raw.shape[0]):
        for c, name in enumerate(names):
            raw, cor = demod.raw[s, c], demod.corrected[s, c]
            rows.append({"symbol": s, "coefficient": name,
                         "raw_re": float(raw.real), "raw_im": float(raw.imag),
                         "re": float(cor.real), "im": float(cor.imag)})
    return rows


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(rows))


# ---------------------------------------------------------------- self-test

@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: measured {self.measured:.3e}, tolerance {self.tolerance:.3e} {self.detail}".rstrip()


def _random_spectrum(rng, plan):
    return map_bits(rng.integers(0, 2, 8), plan)


def check_round_trip(plan, tol_lam, tol_phase, n_symbols=8, samples_per_slot=4096, seed=0):
    """Synthesize random symbols and recover them with the forward NFT."""
    rng = np.random.default_rng(seed)
    grid = TimeGrid.centered(samples_per_slot, plan.slot_width)
    err_lam = err_ph = 0.0
    for _ in range(n_symbols):
        spec = _random_spectrum(rng, plan)
        sig = synthesize(spec, grid)
        roots = find_eigenvalues(sig, spec.eigenvalues, tol=1e-12)
        if len(roots) != len(spec):
            return [CheckResult("round_trip_lambda", np.inf, tol_lam, False, "eigenvalue lost")]
        for e, lam in zip(sorted(spec, key=lambda e: e.lam.imag), roots):
            r = scatter(sig, lam)
            err_lam = max(err_lam, abs(lam - e.lam))
            for got, want in ((r.b1, e.b1), (r.b2, e.b2)):
                err_ph = max(err_ph, abs(np.angle(got / want)))
    return [CheckResult("round_trip_lambda", err_lam, tol_lam, err_lam < tol_lam),
            CheckResult("round_trip_phase", err_ph, tol_phase, err_ph < tol_phase)]


def check_trace_formula(plan, tol, samples_per_slot=4096):
    grid = TimeGrid.centered(samples_per_slot, plan.slot_width)
    sig = synthesize(map_bits(np.zeros(8, int), plan), grid)
    want = 4 * sum(e.imag for e in plan.eigenvalues)
    err = abs(sig.energy() - want) / want
    return [CheckResult("trace_formula", err, tol, err < tol)]


def check_integrability(plan, tol_lam, tol_b, z=0.5, width=60.0, n=4096, n_steps=1000):
    """Lossless propagation must keep eigenvalues and |b| fixed."""
    grid = TimeGrid.centered(n, width)
    spec = map_bits(np.zeros(8, int), plan)
    sig = synthesize(spec, grid)
    out = propagate_normalized(sig, z, n_steps)
    r0 = find_eigenvalues(sig, spec.eigenvalues, tol=1e-12)
    r1 = find_eigenvalues(out, spec.eigenvalues, tol=1e-12)
    if len(r0) != len(spec) or len(r1) != len(spec):
        return [CheckResult("integrability_lambda", np.inf, tol_lam, False, "eigenvalue lost")]
    err_lam = max(abs(a - b) for a, b in zip(r0, r1))
    err_b = 0.0
    for a, b in zip(r0, r1):
        s0, s1 = scatter(sig, a), scatter(out, b)
        for x, y in ((s0.b1, s1.b1), (s0.b2, s1.b2)):
            err_b = max(err_b, abs(abs(y) - abs(x)) / abs(x))
    return [CheckResult("integrability_lambda", err_lam, tol_lam, err_lam < tol_lam),
            CheckResult("integrability_b_modulus", err_b, tol_b, err_b < tol_b)]


def scattering_error_ratio(lam=0.5j, width=40.0, n=1024):
    """Eigenvalue error at n samples over error at 2n for the one-soliton."""
    errs = []
    for m in (n, 2 * n):
        grid = TimeGrid.centered(m, width)
        q1, q2 = one_soliton(grid.t, lam, 1.0, 0.0)
        sig = DualPolSignal(grid, q1, q2, NORMALIZED)
        roots = find_eigenvalues(sig, [lam * 1.01], tol=1e-13)
        errs.append(abs(roots[0] - lam))
    return errs[0] / errs[1]


def propagation_error_ratio(plan, z=0.5, width=60.0, n=2048, steps=50):
    """Split-step error with step h over error with h/2, against a fine reference."""
    grid = TimeGrid.centered(n, width)
    sig = synthesize(map_bits(np.zeros(8, int), plan), grid)
    ref = propagate_normalized(sig, z, 16 * steps)
    e1 = relative_l2(propagate_normalized(sig, z, steps).q1, ref.q1)
    e2 = relative_l2(propagate_normalized(sig, z, 2 * steps).q1, ref.q1)
    return e1 / e2


def check_convergence(plan, lo, hi):
    out = []
    for name, ratio in (("convergence_scattering", scattering_error_ratio()),
                        ("convergence_split_step", propagation_error_ratio(plan))):
        out.append(CheckResult(name, ratio, lo, lo <= ratio <= hi, f"(window [{lo:g}, {hi:g}])"))
    return out


def run_selftest(cfg: ExperimentConfig | None = None) -> list[CheckResult]:
    """Round-trip, trace-formula, integrability and convergence checks."""
    cfg = cfg or ExperimentConfig(mode="roundtrip_selftest")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(cfg.tolerances)
    plan = cfg.signaling
    results = []
    results += check_round_trip(plan, tol["round_trip_lambda"], tol["round_trip_phase"])
    results += check_trace_formula(plan, tol["trace_formula"])
    results += check_integrability(plan, tol["integrability_lambda"], tol["integrability_b_modulus"])
    results += check_convergence(plan, tol["convergence_min"], tol["convergence_max"])
    return results


__all__ = ["CSV_COLUMNS", "CheckResult", "ConfigError", "DEFAULT_TOLERANCES", "ExperimentConfig",
           "config_from_dict", "dump_constellations", "load_config", "point_seed", "run_btb",
           "run_distance_sweep", "run_selftest", "to_csv", "write_csv"]
