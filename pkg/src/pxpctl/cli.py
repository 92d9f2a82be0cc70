"""Command-line entry point.

Verbs::

    pxpctl run CONFIG_OR_MANIFEST --out DIR [--workers N] [--raw]
    pxpctl collapse CSV [CSV ...] --ansatz static --t-rule "L^0.86" --guess p_c=0.5 ...
    pxpctl heatmap RECORDS.jsonl --sample 0 --out traj.svg
    pxpctl verify-magmeter --L 7 --trials 100 [--export-gates gates.txt]
    pxpctl selftest

Exit status is 0 only on full success, 2 on usage or configuration errors
and 1 on failed checks.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, SweepSpec, dump_config, parse_config
from .harness import WORKERS_ENV, aggregate_records, run_ensemble, worker_count
from .records import SCHEMA_VERSION, read_aggregate_csv, read_records_jsonl, write_aggregate_csv, write_records_jsonl

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# ----------------------------------------------------------------------- run


def _point_tag(cfg: ExperimentConfig) -> str:
    return f"{cfg.mode}_L{cfg.L}_p{cfg.p!r}_q{cfg.q!r}"


def _load_run_input(path: str) -> tuple[str, ExperimentConfig | SweepSpec]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        manifest = json.loads(text)
        text = manifest["config_text"]
    return text, parse_config(text)


def cmd_run(args) -> int:
    try:
        text, spec = _load_run_input(args.config)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        return EXIT_USAGE
    points = spec.points() if isinstance(spec, SweepSpec) else [spec]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = worker_count(args.workers)
    started = time.perf_counter()
    csv_path = out / "aggregate.csv"
    outputs = [csv_path.name]
    for k, cfg in enumerate(points):
        records = run_ensemble(cfg, workers)
        rows = []
        if cfg.n_samples >= 2:
            rows = [(cfg, name, aggregate_records(records, name)) for name in cfg.observables if name != "z_profile"]
        write_aggregate_csv(csv_path, rows, append=k > 0)
        if args.raw or "z_profile" in cfg.observables:
            raw = out / f"records_{_point_tag(cfg)}.jsonl"
            write_records_jsonl(raw, cfg, records)
            outputs.append(raw.name)
        if args.verbose:
            print(f"[{k + 1}/{len(points)}] {_point_tag(cfg)} done", file=sys.stderr)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package": "pxpctl",
        "version": __version__,
        "config_text": dump_config(spec),
        "master_seed": points[0].master_seed,
        "n_points": len(points),
        "workers": workers,
        "wall_time_s": round(time.perf_counter() - started, 3),
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(manifest, indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ collapse


def _kv(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"expected name=value, got {item!r}")
        out[key.strip()] = float(value)
    return out


def cmd_collapse(args) -> int:
    from .config import _eval_t_rule, eval_rule
    from .fss import AnsatzForm, CollapseAnsatz, ScalingDataset, UndefinedCostError, collapse, dynamic_dataset

    try:
        form = AnsatzForm(args.ansatz)
        fixed, guess = _kv(args.fix), _kv(args.guess)
        ansatz = CollapseAnsatz(form, fixed=fixed, ratio=args.ratio)
    except ValueError as exc:
        print(f"collapse: {exc}", file=sys.stderr)
        return EXIT_USAGE
    series = read_aggregate_csv(args.csv)
    series = {k: v for k, v in series.items() if k.observable == args.observable}
    if args.q is not None:
        series = {k: v for k, v in series.items() if math.isclose(k.q, args.q)}
    static = form in (AnsatzForm.STATIC, AnsatzForm.STATIC_CORRECTED, AnsatzForm.STATIC_NO_BETA)
    if static:
        if not args.t_rule:
            print("collapse: static forms need --t-rule", file=sys.stderr)
            return EXIT_USAGE
        from .harness import interpolate_at

        pts = []
        for key, s in sorted(series.items(), key=lambda kv: (kv[0].L, kv[0].p)):
            t_star = eval_rule(args.t_rule, key.L)
            value, err = interpolate_at(s, t_star)
            if err > 0:
                pts.append((key.L, key.p, value, err))
        data = ScalingDataset.from_points(pts)
    else:
        if args.p is None:
            print("collapse: dynamic forms need --p", file=sys.stderr)
            return EXIT_USAGE
        by_L = {k.L: v for k, v in series.items() if math.isclose(k.p, args.p)}
        t_hi = (lambda L: _eval_t_rule(args.t_max_rule, L)) if args.t_max_rule else None
        data = dynamic_dataset(by_L, t_min=args.t_min, t_max_of_L=t_hi)
    try:
        result = collapse(data, ansatz, guess)
    except (ValueError, UndefinedCostError) as exc:
        print(f"collapse: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = result.to_text()
    print(text, end="")
    if args.out:
        Path(args.out + ".txt").write_text(text, encoding="utf-8")
        with open(args.out + "_collapsed.csv", "w", encoding="utf-8") as fh:
            fh.write("L,x,y,sigma\n")
            m = result.master
            for row in zip(m.get("L", []), m.get("x", []), m.get("y", []), m.get("sigma", [])):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return EXIT_OK if result.converged else EXIT_FAIL


# ------------------------------------------------------------------- heatmap

_WHITE = np.array([255.0, 255.0, 255.0])
_DARK_BLUE = np.array([8.0, 48.0, 107.0])


def z_color(value: float) -> str:
    """Linear map from -1 (white) to +1 (dark blue)."""
    s = min(1.0, max(0.0, (value + 1.0) / 2.0))
    r, g, b = np.rint(_WHITE + s * (_DARK_BLUE - _WHITE)).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap(z: np.ndarray, cell: int = 4) -> str:
    """SVG with one cell per (time row, site column)."""
    n_t, L = z.shape
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{L * cell}" height="{n_t * cell}" '
        f'viewBox="0 0 {L * cell} {n_t * cell}" shape-rendering="crispEdges">'
    ]
    for t in range(n_t):
        for j in range(L):
            parts.append(
                f'<rect x="{j * cell}" y="{t * cell}" width="{cell}" height="{cell}" fill="{z_color(z[t, j])}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_heatmap(args) -> int:
    _, records = read_records_jsonl(args.records)
    match = [r for r in records if r.sample_index == args.sample]
    if not match:
        print(f"heatmap: sample {args.sample} not in {args.records}", file=sys.stderr)
        return EXIT_USAGE
    if "z_profile" not in match[0].series:
        print("heatmap: records carry no z_profile observable", file=sys.stderr)
        return EXIT_USAGE
    svg = render_heatmap(np.asarray(match[0].series["z_profile"]), args.cell)
    Path(args.out).write_text(svg, encoding="utf-8")
    return EXIT_OK


# ------------------------------------------------------------ verify-magmeter


def cmd_verify_magmeter(args) -> int:
    from .magmeter import build_magcircuit, verify_equivalence

    if args.export_gates:
        Path(args.export_gates).write_text(build_magcircuit(args.L).to_text(), encoding="utf-8")
    sizes = range(1, args.L + 1) if args.all_sizes else [args.L]
    ok = True
    for L in sizes:
        report = verify_equivalence(L, args.trials, args.seed)
        print(report)
        ok &= report.passed
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ selftest


def _selftest_checks():
    from .control import TargetPattern
    from .dynamics import apply_upxp
    from .harness import run_trajectory
    from .hilbert import count_states, enumerate_basis
    from .magmeter import verify_equivalence
    from .statevec import basis_state

    def basis_counts():
        return all(enumerate_basis(L).dim == count_states(L) for L in range(4, 17, 2))

    def vacuum_orbit():
        b = enumerate_basis(8)
        seq = [TargetPattern.ALL_ZERO, TargetPattern.ONE_ON_EVEN, TargetPattern.ONE_ON_ODD]
        st = basis_state(b, 0)
        for k in range(1, 4):
            apply_upxp(st)
            want = seq[k % 3].config(8)
            if abs(abs(st.amps[b.index_of(want)]) - 1.0) > 1e-12:
                return False
        return True

    def magmeter():
        return all(verify_equivalence(L, 5, 0).passed for L in range(1, 6))

    def cross_engine():
        cfg = ExperimentConfig(mode="quantum", L=8, p=0.5, q=0.5, theta=math.pi / 2, t_max=40, n_samples=1)
        ccfg = cfg.replace(mode="classical")
        for i in range(5):
            a, b = run_trajectory(cfg, i), run_trajectory(ccfg, i)
            if not (np.array_equal(a.choices, b.choices) and np.array_equal(a.series["h_zz"], b.series["h_zz"])):
                return False
        return True

    return {"basis counting": basis_counts, "vacuum orbit": vacuum_orbit,
            "magnetization circuit": magmeter, "cross-engine": cross_engine}


def cmd_selftest(args) -> int:
    ok = True
    for name, check in _selftest_checks().items():
        passed = bool(check())
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pxpctl", description="Controlled PXP circuit simulations and analysis.")
    ap.add_argument("--version", action="version", version=f"pxpctl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config (or re-run a manifest) and write CSV/JSONL outputs")
    r.add_argument("config", help="INI config file, or a manifest.json from an earlier run")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--workers", type=int, default=None, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    r.add_argument("--raw", action="store_true", help="also write raw per-sample records as JSONL")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("collapse", help="finite-size-scaling collapse of aggregated CSV data")
    c.add_argument("csv", nargs="+")
    c.add_argument("--ansatz", default="static",
                   choices=["static", "static_corrected", "static_no_beta", "dynamic", "dynamic_shifted", "purification"])
    c.add_argument("--observable", default="h_zz")
    c.add_argument("--t-rule", help='evaluation time for static forms, e.g. "L^0.86" or "0.7*L^0.88"')
    c.add_argument("--p", type=float, help="control rate selecting the curves for dynamic forms")
    c.add_argument("--q", type=float, help="restrict to one correction density")
    c.add_argument("--t-min", type=float, default=1.0, help="earliest time used by dynamic forms")
    c.add_argument("--t-max-rule", help='latest time used by dynamic forms, e.g. "L"')
    c.add_argument("--guess", action="append", metavar="NAME=VALUE", help="initial guess for a free parameter")
    c.add_argument("--fix", action="append", metavar="NAME=VALUE", help="freeze a parameter")
    c.add_argument("--ratio", action="store_true", help="fit beta/nu as one parameter in static forms")
    c.add_argument("--out", help="output prefix for <prefix>.txt and <prefix>_collapsed.csv")
    c.set_defaults(func=cmd_collapse)

    h = sub.add_parser("heatmap", help="render <Z_j>(t) of one recorded trajectory as SVG")
    h.add_argument("records", help="JSONL records written by `run` with the z_profile observable")
    h.add_argument("--sample", type=int, default=0)
    h.add_argument("--cell", type=int, default=4, help="cell size in pixels")
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heatmap)

    v = sub.add_parser("verify-magmeter", help="check the ancilla magnetization circuit against direct projectors")
    v.add_argument("--L", type=int, default=7)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--all-sizes", action="store_true", help="check every size from 1 to L")
    v.add_argument("--export-gates", metavar="PATH", help="write the gate list for size L")
    v.set_defaults(func=cmd_verify_magmeter)

    s = sub.add_parser("selftest", help="quick internal consistency checks")
    s.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
