"""Command-line front end.

Exit codes: 0 success, 1 bad input (missing file, schema error, size
guard, bad flag), 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import distinguish as dist
from . import engine
from . import observer as obs
from .qlin import DensityMatrix

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["n_qubits", "n_streams", "observer"],
    "additionalProperties": False,
    "properties": {
        "n_qubits": {"type": "integer", "minimum": 1},
        "n_streams": {"type": "integer", "minimum": 1},
        "observer": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": [k.value for k in obs.ObserverKind]},
                "dim": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "memory_qubits": {"type": "integer", "minimum": 1},
            },
        },
        "theory": {"enum": [t.value for t in engine.Theory]},
        "samples": {"type": "integer", "minimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "output_path": {"type": "string"},
    },
}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def load_scenario_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise InputError(f"scenario file not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read scenario file {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"schema violation at {where}: {exc.message}") from None
    return data


def scenario_from_dict(data: dict) -> engine.Scenario:
    o = data["observer"]
    kind = obs.ObserverKind(o["kind"])
    if "dim" in o:
        dim = o["dim"]
    elif "memory_qubits" in o:
        dim = 2 ** o["memory_qubits"]
    elif kind is obs.ObserverKind.TOY:
        dim = 2
    else:
        raise InputError("observer needs 'dim' or 'memory_qubits'")
    try:
        spec = obs.ObserverSpec(
            kind=kind, dim_D=dim, seed=o.get("seed", 0), memory_qubits=o.get("memory_qubits")
        )
        return engine.Scenario(
            N=data["n_qubits"],
            m=data["n_streams"],
            observer=spec,
            theory=data.get("theory", "everett"),
            seed=data.get("seed", 0),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


# -- report (de)serialization ------------------------------------------------


def _matrix_to_json(mat: np.ndarray) -> dict:
    return {"real": mat.real.tolist(), "imag": mat.imag.tolist()}


def _matrix_from_json(d: dict) -> np.ndarray:
    return np.asarray(d["real"], dtype=float) + 1j * np.asarray(d["imag"], dtype=float)


def report_to_dict(report: engine.RunReport) -> dict:
    """JSON-ready view of a run; ``per_stream`` matrices are not stored."""
    return {
        "theory": report.theory.value,
        "N": report.N,
        "m": report.m,
        "dim_D": report.dim_D,
        "rho_S": _matrix_to_json(report.rho_S.matrix),
        "per_stream_ranks": list(report.per_stream_ranks),
        "rank_rho_S": report.rank_rho_S,
        "fs_dim": report.fs_dim,
        "eigenvalues": [float(x) for x in report.eigenvalues],
        "trace_distance_to_mixed": float(report.trace_distance_to_mixed),
        "collapse_bits": None if report.samples is None else report.samples.tolist(),
    }


def report_from_dict(d: dict) -> engine.RunReport:
    bits = d.get("collapse_bits")
    return engine.RunReport(
        theory=engine.Theory(d["theory"]),
        N=d["N"],
        m=d["m"],
        dim_D=d["dim_D"],
        rho_S=DensityMatrix(_matrix_from_json(d["rho_S"]), (2 ** d["N"],)),
        per_stream_ranks=list(d["per_stream_ranks"]),
        rank_rho_S=d["rank_rho_S"],
        fs_dim=d["fs_dim"],
        eigenvalues=np.asarray(d["eigenvalues"], dtype=float),
        trace_distance_to_mixed=d["trace_distance_to_mixed"],
        samples=None if bits is None else np.asarray(bits, dtype=np.int8),
    )


def test_result_to_dict(t: dist.TestResult) -> dict:
    return {
        "n_samples": t.n_samples,
        "perp_hits": t.perp_hits,
        "p_value_under_copenhagen": t.p_value_under_copenhagen,
        "decision": t.decision.value,
        "alpha": t.alpha,
        "p0": t.p0,
    }


def test_result_from_dict(d: dict) -> dist.TestResult:
    return dist.TestResult(
        n_samples=d["n_samples"],
        perp_hits=d["perp_hits"],
        p_value_under_copenhagen=d["p_value_under_copenhagen"],
        decision=dist.Decision(d["decision"]),
        alpha=d["alpha"],
        p0=d["p0"],
    )


def samples_csv(samples: np.ndarray, basis: dist.MeasurementBasis) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["outcome", "label"])
    for k in samples:
        writer.writerow([int(k), basis.labels[int(k)]])
    return buf.getvalue()


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _samples_path(out: str | None, suffix: str) -> Path:
    stem = Path(out).with_suffix("") if out and out != "-" else Path("report")
    return stem.with_name(f"{stem.name}.{suffix}.csv")


# -- commands ----------------------------------------------------------------


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    data = load_scenario_file(args.scenario)
    sc = scenario_from_dict(data)
    n = args.samples if args.samples is not None else data.get("samples", 0)
    alpha = args.alpha if args.alpha is not None else data.get("alpha", 0.01)
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    if n < 0:
        raise InputError("--samples must be non-negative")
    if args.seed is not None:
        sc = engine.Scenario(N=sc.N, m=sc.m, observer=sc.observer, theory=sc.theory, seed=seed)

    engine.check_size(sc.N, sc.dim_D)
    u = obs.build(sc.observer, sc.N)
    fs = engine.compute_F_S(u)
    report = engine.run(sc)
    if report.fs_dim is None:
        report.fs_dim = fs.dim
    cert = engine.certify_support_bound(report, fs)

    doc = report_to_dict(report)
    doc.update(
        perp_expectations=cert.max_perp_expectation,
        bound_holds=cert.bound_holds,
        bound_nonvacuous=sc.bound_nonvacuous,
    )
    if n > 0:
        basis = dist.find_distinguishing_basis(report.rho_S, fs if fs.dim < fs.parent_dim else None)
        samples = dist.sample_outcomes(report.rho_S, basis, n, seed)
        if dist.PERP in basis.labels:
            test = dist.perp_hit_test(samples, basis, {dist.PERP}, alpha)
            doc["test"] = test_result_to_dict(test)
        else:
            doc["test"] = None
        if args.format == "csv":
            _samples_path(args.out or data.get("output_path"), "samples").write_text(
                samples_csv(samples, basis)
            )
    doc["tool_version"] = __version__
    doc["wall_time_ms"] = (time.perf_counter() - t0) * 1e3

    status = EXIT_OK
    if sc.theory is engine.Theory.EVERETT and not (cert.support_ok and cert.bound_holds):
        print(
            f"invariant violation: max <chi|rho_S|chi> = {cert.max_perp_expectation:.3g}, "
            f"rank {cert.rank_rho_S}, fs_dim {cert.fs_dim}",
            file=sys.stderr,
        )
        status = EXIT_INVARIANT
    _write(json.dumps(doc, indent=2) + "\n", args.out or data.get("output_path"))
    return status


def cmd_discriminate(args) -> int:
    t0 = time.perf_counter()
    data = load_scenario_file(args.scenario)
    sc = scenario_from_dict(data)
    n = args.samples if args.samples is not None else data.get("samples", 1000)
    alpha = args.alpha if args.alpha is not None else data.get("alpha", 1e-6)
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    if n < 1:
        raise InputError("--samples must be at least 1")
    if not 0 < alpha < 1:
        raise InputError("--alpha must lie in (0, 1)")
    engine.check_size(sc.N, sc.dim_D)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", dist.BoundVacuousWarning)
        res = dist.theory_discrimination(sc, n, alpha, seed)
    for w in caught:
        if issubclass(w.category, dist.BoundVacuousWarning):
            print(f"warning: {w.message}", file=sys.stderr)

    doc = {
        "everett": {
            **report_to_dict(res.everett_report),
            "test": test_result_to_dict(res.everett),
        },
        "copenhagen": {
            **report_to_dict(res.copenhagen_report),
            "test": test_result_to_dict(res.copenhagen),
        },
        "fs_dim": res.fs_dim,
        "bound_vacuous": res.bound_vacuous,
        "discriminating": res.discriminating,
        "basis_labels": list(res.basis.labels),
        "tool_version": __version__,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
    }
    out = args.out or data.get("output_path")
    if args.format == "csv":
        _samples_path(out, "everett").write_text(samples_csv(res.everett_samples, res.basis))
        _samples_path(out, "copenhagen").write_text(samples_csv(res.copenhagen_samples, res.basis))
    if out is not None and out != "-":
        _write(json.dumps(doc, indent=2) + "\n", out)
    summary = (
        f"everett: hits={res.everett.perp_hits}/{n} p={res.everett.p_value_under_copenhagen:.3e} "
        f"{res.everett.decision.value}; copenhagen: hits={res.copenhagen.perp_hits}/{n} "
        f"p={res.copenhagen.p_value_under_copenhagen:.3e} {res.copenhagen.decision.value}"
    )
    print(summary)
    print("DISCRIMINATED" if res.discriminating else "NOT DISCRIMINATED")
    return EXIT_OK


def _fmt_state(vec: np.ndarray) -> str:
    terms = []
    for k, a in enumerate(vec.real):
        if abs(a) > 1e-12:
            sign = "-" if a < 0 else "+"
            terms.append(f"{sign} |{k:03b}>")
    body = " ".join(terms).lstrip("+ ")
    if body.startswith("- "):
        body = "-" + body[2:]
    norm = int(round(1 / abs(vec.real[np.nonzero(np.abs(vec) > 1e-12)[0][0]]) ** 2))
    return f"({body}) / sqrt({norm})"


def toy_demo_text(m: int = 4, n: int = 1000, seed: int = 2024) -> str:
    u = obs.make_toy_unitary()
    spec = obs.ObserverSpec(kind="toy", dim_D=2)
    ev = engine.run_everett(engine.Scenario(N=3, m=m, observer=spec))
    cp = engine.run_copenhagen(engine.Scenario(N=3, m=m, observer=spec, theory="copenhagen", seed=seed))
    fs = engine.compute_F_S(u)
    a_states, b_states = obs.toy_a_states(), obs.toy_b_states()

    lines = [f"Toy observer: N=3 stream qubits, D=2, m={m} streams, observer starts in |psi_0>", ""]
    for name, states in (("A", a_states), ("B", b_states)):
        for i, s in enumerate(states, 1):
            lines.append(f"  |{name}_{i}> = {_fmt_state(s.amplitudes)}")
    lines += ["", "Canonical basis:", "  outcome   everett   copenhagen"]
    for k in range(8):
        e = ev.rho_S.matrix[k, k].real
        c = cp.rho_S.matrix[k, k].real
        lines.append(f"  P({k:03b}) = {e:.6f}   {c:.6f}")
    lines += ["", "{A,B} basis:", "  outcome        everett   copenhagen"]
    for name, states in (("A", a_states), ("B", b_states)):
        for i, s in enumerate(states, 1):
            e = max(ev.rho_S.expectation(s), 0.0)
            c = cp.rho_S.expectation(s)
            lines.append(f"  P({name}_{i}) = {e:.6f}   {c:.6f}")
    lines += [
        "",
        f"rank(rho_S) = {ev.rank_rho_S}, dim F_S = {fs.dim}, D^2 = 4, 2^N = 8",
    ]
    labels = [f"A_{i}" for i in range(1, 5)] + [f"B_{i}" for i in range(1, 5)]
    basis = dist.MeasurementBasis(
        np.column_stack([s.amplitudes for s in a_states + b_states]), labels
    )
    seq_ev, seq_cp = np.random.SeedSequence(seed).spawn(2)
    b_labels = set(labels[4:])
    t_ev = dist.perp_hit_test(dist.sample_outcomes(ev.rho_S, basis, n, seq_ev), basis, b_labels, 1e-6)
    t_cp = dist.perp_hit_test(dist.sample_outcomes(cp.rho_S, basis, n, seq_cp), basis, b_labels, 1e-6)
    lines += [
        "",
        f"{n} samples per theory in the {{A,B}} basis, alpha = 1e-6:",
        f"  everett:    B hits = {t_ev.perp_hits:4d}  p = {t_ev.p_value_under_copenhagen:.3e}  {t_ev.decision.value}",
        f"  copenhagen: B hits = {t_cp.perp_hits:4d}  p = {t_cp.p_value_under_copenhagen:.3e}  {t_cp.decision.value}",
    ]
    return "\n".join(lines) + "\n"


def cmd_toy_demo(args) -> int:
    sys.stdout.write(toy_demo_text())
    return EXIT_OK


def scan_rows(
    kind: str,
    n_min: int,
    n_max: int,
    trials: int,
    seed: int,
    m: int,
    dim: int | None = None,
    memory_qubits: int | None = None,
) -> list[tuple[int, int, int, int, float]]:
    """Rows ``(N, trial, D, rank, trace_distance_to_mixed)`` for an N sweep.

    Random observers draw a fresh unitary per ``(N, trial)`` from a seed
    derived from ``(seed, N, trial)``.
    """
    if n_min < 1 or n_max < n_min:
        raise InputError("need 1 <= n-min <= n-max")
    if trials < 1 or m < 1:
        raise InputError("--trials and --streams must be positive")
    kind = obs.ObserverKind(kind)
    if dim is None:
        dim = 2**memory_qubits if memory_qubits else 2
    for n_q in range(n_min, n_max + 1):
        engine.check_size(n_q, dim)
    rows = []
    for n_q in range(n_min, n_max + 1):
        for trial in range(trials):
            sub = int(np.random.SeedSequence([seed, n_q, trial]).generate_state(1)[0])
            try:
                spec = obs.ObserverSpec(kind=kind, dim_D=dim, seed=sub)
                rep = engine.run_everett(engine.Scenario(N=n_q, m=m, observer=spec, seed=sub))
            except engine.InvariantViolation:
                raise
            except ValueError as exc:
                raise InputError(str(exc)) from None
            rows.append((n_q, trial, dim, rep.rank_rho_S, rep.trace_distance_to_mixed))
    return rows


def format_scan_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "trial", "D", "rank", "trace_distance_to_mixed"])
    for n_q, trial, d, rank, td in rows:
        writer.writerow([n_q, trial, d, rank, f"{td:.12g}"])
    return buf.getvalue()


def cmd_scan(args) -> int:
    rows = scan_rows(
        args.observer,
        args.n_min,
        args.n_max,
        args.trials,
        args.seed if args.seed is not None else 0,
        args.streams,
        args.dim,
        args.memory_qubits,
    )
    if args.format == "json":
        keys = ("N", "trial", "D", "rank", "trace_distance_to_mixed")
        text = json.dumps([dict(zip(keys, r)) for r in rows], indent=2) + "\n"
    else:
        text = format_scan_csv(rows)
    _write(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="everett-lab",
        description="Finite observers measuring qubit streams, with and without collapse.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt_default="json"):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default: stdout / scenario output_path)")
        p.add_argument("--format", choices=("json", "csv"), default=fmt_default)

    p = sub.add_parser("run", help="run one scenario and write a JSON report")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("discriminate", help="test Everett against Copenhagen on one scenario")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("toy-demo", help="print the three-qubit toy example")
    p.set_defaults(func=cmd_toy_demo)

    p = sub.add_parser("scan", help="sweep N and report rank / distance from full mixing")
    p.add_argument("--observer", choices=[k.value for k in obs.ObserverKind], default="random")
    p.add_argument("--dim", type=int, default=None, help="observer dimension D")
    p.add_argument("--memory-qubits", type=int, default=None)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--streams", type=int, default=4, help="streams per run (m)")
    common(p, fmt_default="csv")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INPUT
    try:
        return args.func(args)
    except engine.InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, engine.SizeGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
