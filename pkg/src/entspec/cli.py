"""``entspec`` command line: batch experiments and report emission.

Exit codes: 0 success, 1 input error, 2 mathematical degeneracy, 3 scale,
4 promise or confidence violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .cnf import (
    brute_force_count,
    build_hamiltonian,
    hamiltonian_to_density,
    lambda_star,
    parse_dimacs,
    random_formula,
)
from .config import max_qubits
from .core import schmidt_spectrum
from .errors import ArgumentError, EntspecError, FormatError, ScaleError
from .qpe import MODES, PhaseEstimationConfig, auto_config, run_counting_pipeline
from .spectrum import (
    CountPromise,
    count_ground_degeneracy,
    count_report,
    midgap_delta,
    polynomial_delta,
    spectrum_csv,
)

FORMULA_PROMISE = CountPromise(1.0, 0.0)
MAX_LEGAL_DIM = 2**22


@dataclass
class ExperimentConfig:
    """Parameters shared by the subcommands; a JSON config file may set any of them."""

    dimacs: str | None = None
    mode: str = "exact_diagonal"
    dt: int | None = None
    r: int = 1
    epsilon: float = 1e-8
    delta_exp: int | None = None
    out: str | None = None
    seed: int | None = None
    n: int = 1
    t: tuple[float, ...] = (math.pi,)
    kmax: int | None = None
    count: int = 10
    clauses: int | None = None
    csv: str | None = None
    terms: str | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {', '.join(MODES)}")
        if self.dt is not None and not 1 <= self.dt <= 12:
            raise ArgumentError("--dt must lie in 1..12")
        if self.r < 1 or self.r % 2 == 0 or self.r > 9:
            raise ArgumentError("--r must be odd and at most 9")
        if not 0 < self.epsilon < 1:
            raise ArgumentError("--epsilon must lie in (0, 1)")
        if self.delta_exp is not None and not 0 <= self.delta_exp <= 20:
            raise ArgumentError("--delta-exp must lie in 0..20")
        if self.kmax is not None and not 0 <= self.kmax <= 80:
            raise ArgumentError("--kmax must lie in 0..80")
        if self.count < 1:
            raise ArgumentError("--count must be positive")

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        values: dict = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise FormatError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(raw, dict):
                raise FormatError("config file must hold a JSON object")
            unknown = sorted(set(raw) - known)
            if unknown:
                raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
            values.update(raw)
        values.update({k: v for k, v in overrides.items() if k in known and v is not None})
        if "t" in values:
            values["t"] = tuple(float(x) for x in np.atleast_1d(values["t"]))
        cfg = cls(**values)
        cfg.validate()
        return cfg


def _read_formula(cfg: ExperimentConfig):
    if not cfg.dimacs:
        raise ArgumentError("--dimacs is required")
    try:
        text = Path(cfg.dimacs).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {cfg.dimacs}: {exc}") from exc
    return parse_dimacs(text)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _delta(cfg: ExperimentConfig, n: int, num_clauses: int) -> float:
    if cfg.delta_exp is None:
        return midgap_delta(n, num_clauses)
    return polynomial_delta(lambda_star(n), n, cfg.delta_exp)


def _pipeline_config(h, cfg: ExperimentConfig) -> PhaseEstimationConfig:
    base = auto_config(h, FORMULA_PROMISE, cfg.r, cfg.mode)
    if cfg.dt is None:
        return base
    return PhaseEstimationConfig(cfg.dt, cfg.r, base.threshold_b, cfg.mode, base.scale)


def cmd_count_sat(cfg: ExperimentConfig) -> dict:
    f = _read_formula(cfg)
    h = build_hamiltonian(f)
    rho = hamiltonian_to_density(h)
    n = f.num_vars
    brute = brute_force_count(f)
    cgd_exact = count_ground_degeneracy(h, FORMULA_PROMISE)
    result = run_counting_pipeline(h, FORMULA_PROMISE, _pipeline_config(h, cfg))
    s = schmidt_spectrum(rho).with_promise(lambda_star(n), _delta(cfg, n, f.num_clauses))
    ces = count_report(s, n)
    cgd_ces = None if ces["count"] is None else 2**n - ces["count"]
    return {
        "n": n,
        "num_clauses": f.num_clauses,
        "brute_force": brute,
        "cgd_exact": cgd_exact,
        "cgd_pipeline": result.rounded,
        "uev": result.uev,
        "ces": ces["count"],
        "cgd_from_ces": cgd_ces,
        "delta": s.delta,
        "agree": brute == cgd_exact == result.rounded == cgd_ces,
    }


def cmd_spectrum(cfg: ExperimentConfig) -> tuple[str, dict]:
    f = _read_formula(cfg)
    h = build_hamiltonian(f)
    rho = hamiltonian_to_density(h)
    n = f.num_vars
    s = schmidt_spectrum(rho).with_promise(lambda_star(n), _delta(cfg, n, f.num_clauses))
    return spectrum_csv(s), count_report(s, n)


def cmd_qpe_count(cfg: ExperimentConfig) -> dict:
    f = _read_formula(cfg)
    h = build_hamiltonian(f)
    result = run_counting_pipeline(h, FORMULA_PROMISE, _pipeline_config(h, cfg))
    return result.record(brute_force_count(f))


def cmd_taylor_bench(cfg: ExperimentConfig) -> str:
    from .lcu import choose_K, pauli_decompose, random_density_matrix, taylor_error, truncation_bound

    if cfg.seed is None:
        raise ArgumentError("taylor-bench draws a random state; pass --seed")
    if not 1 <= cfg.n <= 4:
        raise ScaleError("taylor-bench supports 1 to 4 system qubits")
    rng = np.random.default_rng(cfg.seed)
    A = pauli_decompose(random_density_matrix(cfg.n, rng))
    lam = float(np.max(np.abs(np.linalg.eigvalsh(A.recompose()))))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "K", "error", "bound", "chosen"])
    for t in cfg.t:
        norm = abs(t) * lam
        chosen = choose_K(norm, cfg.epsilon)
        kmax = chosen if cfg.kmax is None else max(cfg.kmax, chosen)
        for K in range(0, kmax + 1 if t != 0 else 1):
            err = taylor_error(A, t, K)
            w.writerow([repr(t), K, repr(err), repr(truncation_bound(norm, K)), int(K == chosen)])
    return buf.getvalue()


def cmd_history_verify(cfg: ExperimentConfig) -> dict:
    from .history import (
        HistoryLayout,
        build_history_circuit,
        build_history_hamiltonian,
        history_sectors,
        HistoryState,
        intermediate_spectra,
        spectra_csv,
        verify_spectrum,
    )

    f = _read_formula(cfg)
    lay = HistoryLayout(f.num_vars, f.num_clauses)
    if lay.num_qubits > max_qubits():
        raise ScaleError(f"history register has {lay.num_qubits} qubits, cap is {max_qubits()}")
    hc = build_history_circuit(f)
    if (hc.T + 1) * 2**lay.num_qubits > MAX_LEGAL_DIM:
        raise ScaleError(f"legal subspace of dimension {(hc.T + 1) * 2**lay.num_qubits} is out of reach")
    state = HistoryState(hc, history_sectors(hc.gates, lay.num_qubits, hc.input_state()))
    hh = build_history_hamiltonian(f, hc)
    rep = verify_spectrum(hh, state)
    tau, steps, _ = intermediate_spectra(f, state)
    rho_prime = np.linalg.eigvalsh(tau.rho_prime.entries)
    if cfg.csv:
        Path(cfg.csv).write_text(spectra_csv(steps))
    if cfg.terms:
        Path(cfg.terms).write_text(hh.dump_json())
    return {
        "n": f.num_vars,
        "num_clauses": f.num_clauses,
        "T0": hh.T0,
        "T": hh.T,
        "ground_energy": rep.ground_energy,
        "second_energy": rep.second_energy,
        "gap": rep.gap,
        "gap_bound": rep.gap_bound,
        "gap_ok": rep.gap_ok,
        "ground_overlap": rep.overlap,
        "history_residual": rep.residual,
        "eigen_residual": rep.eigen_residual,
        "locality_violations": hh.locality_violations(),
        "psd_violations": hh.psd_violations(),
        "tau_residual": tau.residual,
        "rho_prime_min_nonzero": float(rho_prime[rho_prime > 1e-12].min()),
        "rho_prime_max": float(rho_prime.max()),
        "per_t": [{"t": s.t, "max_eig": s.max_eig, "min_nonzero_eig": s.min_nonzero_eig} for s in steps],
    }


def cmd_gen_formulas(cfg: ExperimentConfig) -> list[str]:
    if cfg.seed is None:
        raise ArgumentError("gen-formulas is random; pass --seed")
    if not cfg.out:
        raise ArgumentError("gen-formulas needs --out DIR")
    if cfg.n < 2:
        raise ArgumentError("random 2-CNF needs --n >= 2")
    rng = np.random.default_rng(cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(cfg.count):
        m = cfg.clauses if cfg.clauses is not None else int(rng.integers(1, 3 * cfg.n + 1))
        path = out / f"f{i:04d}.cnf"
        path.write_text(random_formula(cfg.n, m, rng).to_dimacs())
        written.append(str(path))
    return written


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default parameters")
    common.add_argument("--dimacs", help="2-CNF input in DIMACS format")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--dt", type=int, help="phase-register bits per round")
    common.add_argument("--r", type=int, help="number of phase-estimation rounds (odd)")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta-exp", dest="delta_exp", type=int,
                        help="use delta = lambda*/n^k instead of the mid-gap threshold")
    common.add_argument("--out", help="output path (stdout when omitted)")
    common.add_argument("--seed", type=int)

    parser = argparse.ArgumentParser(prog="entspec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("count-sat", parents=[common], help="compare #SAT, CGD and CES")
    p = sub.add_parser("spectrum", parents=[common], help="Schmidt spectrum CSV and count")
    p.add_argument("--report", help="write the count report JSON here")
    sub.add_parser("qpe-count", parents=[common], help="run the phase-estimation counter")
    p = sub.add_parser("taylor-bench", parents=[common], help="K sweep of the LCU error")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float, nargs="+")
    p.add_argument("--kmax", type=int)
    p = sub.add_parser("history-verify", parents=[common], help="check the history Hamiltonian")
    p.add_argument("--csv", help="per-t spectral report")
    p.add_argument("--terms", help="JSON dump of the Hamiltonian terms")
    p = sub.add_parser("gen-formulas", parents=[common], help="write random 2-CNF files")
    p.add_argument("--n", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--clauses", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config, vars(args))
        if args.command == "count-sat":
            _emit(json.dumps(cmd_count_sat(cfg), sort_keys=True), cfg.out)
        elif args.command == "spectrum":
            table, report = cmd_spectrum(cfg)
            _emit(table, cfg.out)
            if args.report:
                Path(args.report).write_text(json.dumps(report, sort_keys=True))
        elif args.command == "qpe-count":
            _emit(json.dumps(cmd_qpe_count(cfg), sort_keys=True), cfg.out)
        elif args.command == "taylor-bench":
            _emit(cmd_taylor_bench(cfg), cfg.out)
        elif args.command == "history-verify":
            _emit(json.dumps(cmd_history_verify(cfg), sort_keys=True), cfg.out)
        else:
            for path in cmd_gen_formulas(cfg):
                print(path)
    except EntspecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
