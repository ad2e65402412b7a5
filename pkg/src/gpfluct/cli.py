"""Command line: gpfluct <subcommand> [--config PATH] [--out DIR] [--threads N] [overrides]."""

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import workflows as wf
from .bogoliubov import ThetaPropagator, s_defect, symplectic_defect
from .clt import write_records
from .config import QUANTITIES, load_config
from .errors import ConfigError, NumericalError, ToleranceError
from .fitting import fit_power_law
from .fock import write_sweep
from .formats import read_binary, write_csv, write_json
from .kernels import export_kernel
from .scattering import write_profile

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOLERANCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


OVERRIDES = (
    ("--N", "physics.N", _int_list),
    ("--ell", "physics.ell", float),
    ("--t-end", "physics.t_end", float),
    ("--dt", "physics.dt", float),
    ("--L", "grid.L", float),
    ("--M", "grid.M", int),
    ("--seed", "field.seed", int),
    ("--kernel-t", "kernels.t", float),
    ("--s-nodes", "kernels.s_nodes", int),
    ("--theta-dt", "theta.dt", float),
    ("--theta-N", "theta.N", int),
    ("--flavor", "theta.flavor", str),
    ("--theta-from", "clt.theta_from", str),
    ("--fock-N", "fock.N", _int_list),
    ("--fock-m", "fock.m", int),
    ("--quantity", "study.quantity", str),
)


def build_parser():
    parser = _Parser(prog="gpfluct", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "scattering": "scattering lengths, Neumann eigenvalues and profile checks per N",
        "gpe": "condensate conservation trace and flavor distances",
        "kernels": "kernel identities and finite-N vs limiting distances",
        "generator": "generator blocks, distances and the kappa trace",
        "theta": "Bogoliubov propagation with defect diagnostics",
        "clt": "central-limit variance and interval probabilities",
        "fock": "truncated Fock-space algebra sweeps",
        "study": "N-sweep of one quantity with a power-law fit",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML run configuration (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent sweep points")
        p.add_argument("--export", action="store_true", help="also write kernels/blocks as binary files")
        for flag, key, kind in OVERRIDES:
            p.add_argument(flag, dest=key, type=kind, default=None, help=f"override {key}")
    return parser


def _configure(args):
    cfg = load_config(args.config)
    overrides = {key: getattr(args, key) for _, key, _ in OVERRIDES if getattr(args, key) is not None}
    if args.out:
        overrides["output.dir"] = args.out
    if overrides:
        cfg = cfg.with_overrides(overrides)
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}")
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _fit_record(quantity, fit):
    return {"quantity": quantity, "slope": fit.slope, "decay_exponent": fit.decay, "r_squared": fit.r_squared,
            "slope_stderr": fit.stderr, "ci95_low": fit.ci95[0], "ci95_high": fit.ci95[1], "points": fit.points}


def _write_fit(path, quantity, fit):
    rec = _fit_record(quantity, fit)
    keys = ("quantity", "slope", "decay_exponent", "r_squared", "slope_stderr", "ci95_low", "ci95_high", "points")
    write_csv(path, keys, [[rec[k] for k in keys]])


def run_scattering(cfg, out, args):
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        records = list(pool.map(lambda n: wf.scattering_record(cfg, n), cfg["physics"]["N"]))
    keys = list(records[0])
    write_csv(out / "scattering.csv", keys, [[r[k] for k in keys] for r in records])
    for n in cfg["physics"]["N"]:
        write_profile(out / f"profile_N{n}.txt", wf.scattering_at(cfg, n))
    summary = {"records": records}
    if len(records) >= 2 and all(r["integral_Vf_residual"] > 0 for r in records):
        fit = fit_power_law([r["N"] for r in records], [r["integral_Vf_residual"] for r in records])
        summary["integral_Vf_fit"] = _fit_record("scattering_integral", fit)
    write_json(out / "scattering.json", summary)
    for r in records:
        print(f"N = {r['N']}: a = {r['scattering_length']:.10g}, lambda ratio = {r['lambda_ratio']:.6g}, "
              f"|int Vf - 8 pi a| = {r['integral_Vf_residual']:.4g}")


def run_gpe(cfg, out, args):
    rep = wf.gpe_records(cfg)
    write_csv(out / "gpe_trace.csv", ("t", "norm", "energy", "energy_drift"),
              [(r["t"], r["norm"], r["energy"], r["energy_drift"]) for r in rep["trace"]])
    rows, fit = wf.study(cfg, "field_distance", args.threads)
    write_csv(out / "gpe_distance.csv", ("N", "field_distance"), rows)
    write_json(out / "gpe.json", {"mass_drift": rep["mass_drift"], "energy_drift": rep["energy_drift"],
                                  "mass_outside_quarter_box": rep["mass_outside_quarter_box"],
                                  "field_distance_fit": _fit_record("field_distance", fit)})
    print(f"mass drift {rep['mass_drift']:.3g}, energy drift {rep['energy_drift']:.3g}, "
          f"field-distance slope {fit.slope:.4f} (R^2 {fit.r_squared:.4f})")


def run_kernels(cfg, out, args):
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        reports = list(pool.map(lambda n: wf.kernel_report(cfg, n), cfg["physics"]["N"]))
    rows, residuals = [], {}
    for ks, dist in reports:
        rows.extend(dist.rows())
        residuals[str(int(ks.pack_n.N))] = {"finite_N": ks.pack_n.residuals(), "limiting": ks.pack_l.residuals()}
        if args.export:
            export_kernel(out / f"eta_N{int(ks.pack_n.N)}.bin", ks.pack_n, "eta")
            export_kernel(out / "eta_limit.bin", ks.pack_l, "eta")
    write_csv(out / "kernel_distances.csv", ("t", "N", "ell", "quantity", "value"), rows)
    summary = {"residuals": residuals}
    if len(reports) >= 2:
        fit = fit_power_law([d.N for _, d in reports], [d.continuum["eta"] for _, d in reports])
        summary["eta_distance_fit"] = _fit_record("eta_distance", fit)
        print(f"eta distance slope {fit.slope:.4f} (R^2 {fit.r_squared:.4f})")
    write_json(out / "kernels.json", summary)


def run_generator(cfg, out, args):
    ns = cfg["physics"]["N"]
    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        sets = list(pool.map(lambda n: wf.generator_set(cfg, n), ns))
    rows, summary = [], {"residuals": {}, "norms": {}}
    for n, gs in zip(ns, sets):
        d = gs.distance()
        rows.append((n, d.G_op, d.H_hs_grid, d.H_hs))
        summary["residuals"][str(n)] = gs.blocks_n.residuals()
        summary["norms"][str(n)] = gs.blocks_n.norms()
        if args.export:
            gs.blocks_n.export(str(out / f"blocks_N{n}"))
    if args.export:
        sets[-1].blocks_l.export(str(out / "blocks_limit"))
    write_csv(out / "generator_distances.csv", ("N", "G_op_distance", "H_hs_distance_grid", "H_hs_distance"), rows)
    if len(ns) >= 2:
        summary["G_distance_fit"] = _fit_record("G_distance", fit_power_law(ns, [r[1] for r in rows]))
        summary["H_distance_fit"] = _fit_record("H_distance", fit_power_law(ns, [r[3] for r in rows]))
    t = cfg["kernels"]["t"]
    times = [0.0, 0.5 * t, t] if t > 0 else [0.0]
    trace = wf.kappa_trace(cfg, ns[-1], times)
    trace.write_csv(out / f"kappa_N{ns[-1]}.csv")
    write_json(out / "generator.json", summary)
    print(f"kappa(N = {ns[-1]}) at t = {times[-1]}: {trace.samples[-1].value:.8g}")


def run_theta(cfg, out, args):
    theta, _ = wf.theta_run(cfg)
    theta.write_defects(out / "theta_defects.csv")
    grid = wf.grid_of(cfg)
    theta.export(str(out / "theta"), grid)
    write_json(out / "theta.json", {
        "flavor": cfg["theta"]["flavor"], "construction": "finite_N analogue" if cfg["theta"]["flavor"] == "finite_N"
        else "limiting", "t": theta.t, "s": theta.s, "symplectic_defect": theta.symplectic_defect,
        "defect_S": theta.defect_S, "reality_residual": theta.reality_residual(), "polar_correction": theta.corrected})
    print(f"Theta({theta.t}, {theta.s}): symplectic defect {theta.symplectic_defect:.4g}, "
          f"S defect {theta.defect_S:.4g}")


def load_theta(prefix):
    parts = []
    for name in ("U", "V"):
        _, meta, arr = read_binary(f"{prefix}_{name}.bin")
        parts.append((meta, arr))
    (meta, U), (_, V) = parts
    return ThetaPropagator(U, V, float(meta["t"]), float(meta["s"]), symplectic_defect(U, V), s_defect(U, V))


def run_clt(cfg, out, args):
    prefix = cfg["clt"]["theta_from"]
    theta = load_theta(prefix) if prefix else wf.theta_run(cfg)[0]
    res, rec = wf.clt_records(cfg, theta)
    write_records(out / "clt.json", [rec])
    print(f"variance {res.variance:.10g} at t = {res.t}")
    for item in rec["prob_intervals"]:
        print(f"  P([{item['a']:g}, {item['b']:g}]) = {item['probability']:.10g}")


def run_fock(cfg, out, args):
    rows = wf.fock_rows(cfg, args.threads)
    write_sweep(out / "fock_sweep.csv", rows)
    for r in rows:
        if r[2] in ("d_defect_slope", "weyl_error"):
            print(f"{r[2]}: {r[3]:.6g}")


def run_study(cfg, out, args):
    q = cfg["study"]["quantity"]
    if q not in QUANTITIES:
        raise ConfigError(f"unknown quantity {q!r}")
    rows, fit = wf.study(cfg, q, args.threads)
    write_csv(out / f"study_{q}.csv", ("N", q), rows)
    _write_fit(out / f"study_{q}_fit.csv", q, fit)
    print(f"{q}: slope {fit.slope:.4f}, R^2 {fit.r_squared:.4f}, 95% CI [{fit.ci95[0]:.3f}, {fit.ci95[1]:.3f}]")


COMMANDS = {
    "scattering": run_scattering, "gpe": run_gpe, "kernels": run_kernels, "generator": run_generator,
    "theta": run_theta, "clt": run_clt, "fock": run_fock, "study": run_study,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg, out = _configure(args)
        COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ToleranceError as exc:
        print(f"tolerance violation: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
