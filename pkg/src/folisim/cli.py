"""Configuration-driven command line entry point.

Every output file embeds the config hash and master seed; runs are
reproducible byte-for-byte given the same config and seed. Subcommands
write CSV data plus a JSON summary into the output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import cocycle, config as cfgmod, occupation as occmod
from .brownian import SamplerConfig, heat_tail_fit
from .errors import FolisimError
from .foliation import AmbientPoint, HYPERBOLIC


def _start(cfg, key="start", exp=None):
    s = None
    if exp is not None:
        s = exp.get(key)
    if s is None:
        s = cfg.get(key)
    if s is None:
        raise FolisimError("config has no start point")
    return np.array([complex(p[0], p[1]) for p in s])


def _header(cfg, seed):
    return f"# config_sha256={cfgmod.config_sha(cfg)} seed={seed}\n"


def _write_csv(path, cfg, seed, header_cols, rows):
    with open(path, "w") as fh:
        fh.write(_header(cfg, seed))
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_json(path, cfg, seed, payload):
    payload = {"config_sha256": cfgmod.config_sha(cfg), "seed": seed,
               **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    return payload


def cmd_singularities(cfg, fol, scfg, outdir, args):
    rows = []
    verdicts = []
    for k, chart in enumerate(fol.charts):
        for s in chart.singularities:
            sp = fol.refine_singularity(AmbientPoint(k, s.location))
            resid = float(np.linalg.norm(fol.field(k)(sp.location)))
            rows.append((k, *np.round(sp.location, 12).tolist(),
                         *np.round(sp.eigenvalues, 12).tolist(),
                         sp.classification, resid))
            verdicts.append(sp.classification)
            loc = np.round(sp.location, 6)
            eigs = np.round(sp.eigenvalues, 6)
            print(f"chart {k}: {loc} eigenvalues {eigs} -> {sp.classification}")
    path = os.path.join(outdir, "singularities.csv")
    cols = (["chart"] + [f"x{i}" for i in range(fol.dim)]
            + [f"eig{i}" for i in range(fol.dim)] + ["classification", "residual"])
    _write_csv(path, cfg, scfg.seed, cols, rows)
    summary = {"n_singularities": len(rows),
               "all_hyperbolic": all(v == HYPERBOLIC for v in verdicts)}
    _write_json(os.path.join(outdir, "singularities.json"), cfg, scfg.seed, summary)
    return 0


def cmd_lyapunov(cfg, fol, scfg, outdir, args):
    exp = cfg.get("experiments", {}).get("lyapunov", {})
    bundles = tuple(exp.get("bundles", ["N"]))
    n_paths = args.paths or cfg["sampler"].get("paths", 50)
    start = _start(cfg, exp=exp)
    res = cocycle.run_cocycle_ensemble(
        fol, start, scfg, n_paths, bundles=bundles,
        record_every=exp.get("record_every", 5))
    expected = exp.get("expected", {})
    summary = {"bundles": {}, "n_paths": n_paths,
               "horizon": scfg.horizon,
               "caveat": ("exponents are in simulator g-time; comparison to "
                          "constant-curvature values holds up to the metric "
                          "comparability constant")}
    slope_rows = []
    for b in bundles:
        est = cocycle.lyapunov_estimate(res["times"], res["series"][b],
                                        window=exp.get("regression_window", 0.5))
        exp_val = expected.get("lambda" if b == "N" else "mu")
        entry = {"slope": est["slope"], "ci95": list(est["ci95"]),
                 "sem": est["sem"], "expected_magnitude": exp_val}
        if exp_val:
            entry["ratio_to_expected"] = -est["slope"] / exp_val
        summary["bundles"][b] = entry
        for i, sl in enumerate(est["per_path"]):
            slope_rows.append((b, i, float(sl)))
        print(f"bundle {b}: slope {est['slope']:+.4f} "
              f"CI [{est['ci95'][0]:+.4f}, {est['ci95'][1]:+.4f}]"
              + (f" expected magnitude {exp_val}" if exp_val else ""))
    _write_csv(os.path.join(outdir, "lyapunov_slopes.csv"), cfg, scfg.seed,
               ["bundle", "path_index", "slope"], slope_rows)
    series_rows = []
    for b in bundles:
        mean = res["series"][b].mean(axis=0)
        sem = res["series"][b].std(axis=0, ddof=1) / np.sqrt(n_paths)
        for t, m, s in zip(res["times"], mean, sem):
            series_rows.append((b, float(t), float(m), float(m - 1.96 * s),
                                float(m + 1.96 * s)))
    _write_csv(os.path.join(outdir, "lyapunov_series.csv"), cfg, scfg.seed,
               ["bundle", "t", "mean", "ci_lo", "ci_hi"], series_rows)
    _write_json(os.path.join(outdir, "lyapunov.json"), cfg, scfg.seed, summary)
    return 0


def cmd_occupation(cfg, fol, scfg, outdir, args):
    exp = cfg.get("experiments", {}).get("occupation", {})
    binning = occmod.Binning(n_charts=fol.atlas.n_charts,
                             bins=exp.get("bins", 20),
                             box=exp.get("box", 2.5))
    checkpoints = exp.get("checkpoints", [scfg.horizon])
    if args.horizon is not None:
        checkpoints = [T for T in checkpoints if T <= args.horizon]
        checkpoints = checkpoints or [args.horizon]
    horizon = max(checkpoints)
    scfg = SamplerConfig(h=scfg.h, horizon=horizon, seed=scfg.seed,
                         guard_fraction=scfg.guard_fraction,
                         flowbox_c=scfg.flowbox_c, time_factor=scfg.time_factor,
                         subdiscretize=scfg.subdiscretize, rtol=scfg.rtol)
    n_paths = args.paths or exp.get("paths") or cfg["sampler"].get("paths", 24)
    start = _start(cfg, exp=exp)
    eps = exp.get("near_plane_eps") if fol.dim == 3 else None
    res = occmod.run_occupation_ensemble(fol, start, scfg, n_paths, binning,
                                         checkpoints, eps_plane=eps,
                                         track_ell=True)
    rows = []
    T_last = max(res["histograms"])
    hist = res["histograms"][T_last]
    masses = hist.normalized()
    width = binning.box / binning.bins
    for c in range(binning.n_charts):
        for i in range(binning.bins):
            for j in range(binning.bins):
                if masses[c, i, j] > 0:
                    rows.append((c, i, j, (i + 0.5) * width, (j + 0.5) * width,
                                 float(masses[c, i, j])))
    _write_csv(os.path.join(outdir, "occupation.csv"), cfg, scfg.seed,
               ["chart", "i", "j", "center_mod_a", "center_mod_b", "mass"],
               rows)
    ell_a, ell_b = res["ell"].dyadic_window_means()
    summary = {"checkpoints": checkpoints,
               "mass_total": float(masses.sum()),
               "ell_average_last_windows": [ell_a, ell_b],
               "ell_average_rel_change": abs(ell_b - ell_a) / abs(ell_a),
               "path_status_counts": np.bincount(res["status"],
                                                 minlength=3).tolist()}
    if eps is not None:
        fr = {str(T): res["near_plane"][T] for T in res["near_plane"]}
        vals = [res["near_plane"][T] for T in sorted(res["near_plane"])]
        summary["near_plane_fraction"] = fr
        summary["near_plane_monotone"] = all(
            b >= a for a, b in zip(vals, vals[1:]))
        print("near-plane fractions:", fr)
    _write_json(os.path.join(outdir, "occupation.json"), cfg, scfg.seed, summary)
    print(f"occupation histogram written (T={T_last}, "
          f"{len(rows)} occupied cells)")
    if args.paths_csv:
        _dump_paths(fol, cfg, scfg, args.paths_csv, start)
    return 0


def _dump_paths(fol, cfg, scfg, path_csv, start, n_dump=3):
    from .brownian import sample_path

    rows = []
    for i in range(n_dump):
        short = SamplerConfig(h=scfg.h, horizon=min(scfg.horizon, 50.0),
                              seed=scfg.seed, rtol=scfg.rtol)
        p = sample_path(fol, AmbientPoint(0, start), short, index=i)
        for k in range(p.n_samples()):
            row = [i, float(p.times[k]), int(p.charts[k])]
            for c in p.points[k]:
                row += [float(c.real), float(c.imag)]
            row.append(float(p.ells[k]))
            rows.append(tuple(row))
    cols = (["path", "t", "chart"]
            + sum([[f"re_x{i}", f"im_x{i}"] for i in range(fol.dim)], [])
            + ["ell"])
    _write_csv(path_csv, cfg, scfg.seed, cols, rows)


def cmd_similarity(cfg, fol, scfg, outdir, args):
    exp = cfg.get("experiments", {}).get("similarity", {})
    binning = occmod.Binning(n_charts=fol.atlas.n_charts,
                             bins=exp.get("bins", 20), box=exp.get("box", 2.5))
    checkpoints = exp.get("checkpoints", [scfg.horizon])
    if args.horizon is not None:
        checkpoints = [T for T in checkpoints if T <= args.horizon]
        checkpoints = checkpoints or [args.horizon]
    horizon = max(checkpoints)
    scfg = SamplerConfig(h=scfg.h, horizon=horizon, seed=scfg.seed,
                         guard_fraction=scfg.guard_fraction,
                         flowbox_c=scfg.flowbox_c, time_factor=scfg.time_factor,
                         subdiscretize=scfg.subdiscretize, rtol=scfg.rtol)
    n_paths = args.paths or exp.get("paths") or cfg["sampler"].get("paths", 24)
    start_a = _start(cfg, "start", exp)
    start_b = _start(cfg, "start_b", exp)
    res = occmod.similarity_check(fol, start_a, start_b, scfg, n_paths,
                                  binning, checkpoints,
                                  match_seeds=exp.get("match_seeds", True))
    tvs = {str(T): res["tv"][T] for T in sorted(res["tv"])}
    vals = [res["tv"][T] for T in sorted(res["tv"])]
    summary = {"tv": tvs,
               "decreasing": all(b <= a for a, b in zip(vals, vals[1:])),
               "final_tv": vals[-1]}
    _write_json(os.path.join(outdir, "similarity.json"), cfg, scfg.seed, summary)
    _write_csv(os.path.join(outdir, "similarity.csv"), cfg, scfg.seed,
               ["T", "tv"], [(T, v) for T, v in sorted(res["tv"].items())])
    print("two-start occupation TV:", tvs)
    return 0


def cmd_contraction(cfg, fol, scfg, outdir, args):
    from .projection import contraction_experiment

    exp = cfg.get("experiments", {}).get("contraction", {})
    thetas = exp.get("theta_grid", [0.01, 0.03, 0.1])
    horizon = exp.get("horizon", min(scfg.horizon, 20.0))
    run_cfg = SamplerConfig(h=scfg.h, horizon=horizon, seed=scfg.seed,
                            rtol=scfg.rtol)
    n_paths = args.paths or exp.get("paths", 12)
    start = _start(cfg, exp=exp)
    res = contraction_experiment(fol, start, run_cfg, thetas,
                                 n_paths=n_paths, eta=exp.get("eta", 0.5),
                                 rho=exp.get("rho", 0.2))
    rows = []
    for ip in range(len(res["ratios"])):
        for jt, th in enumerate(res["thetas"]):
            for k, t in enumerate(res["times"]):
                r = res["ratios"][ip, k, jt]
                if np.isfinite(r):
                    rows.append((ip, th, float(t), float(r)))
    _write_csv(os.path.join(outdir, "contraction.csv"), cfg, scfg.seed,
               ["path", "theta", "t", "ratio"], rows)
    summary = {"mean_rate": res["mean_rate"],
               "fraction_monotone": res["fraction_monotone"],
               "thetas": res["thetas"]}
    _write_json(os.path.join(outdir, "contraction.json"), cfg, scfg.seed, summary)
    print(f"contraction: mean envelope rate {res['mean_rate']:+.4f}, "
          f"monotone fraction {res['fraction_monotone']:.2f}")
    return 0


def cmd_heat_tail(cfg, fol, scfg, outdir, args):
    exp = cfg.get("experiments", {}).get("heat_tail", {})
    deltas = exp.get("deltas", [0.25, 0.5, 1.0])
    r_grid = exp.get("r_grid", [1.0, 1.5, 2.0, 2.5, 3.0])
    tmpl = SamplerConfig(h=exp.get("h", 0.01), horizon=max(deltas),
                         seed=scfg.seed)
    slope, icpt, r2, rows = heat_tail_fit(tmpl, deltas, r_grid,
                                          n_paths=exp.get("n_paths", 4000))
    _write_csv(os.path.join(outdir, "heat_tail.csv"), cfg, scfg.seed,
               ["delta", "R", "survival"], rows)
    summary = {"slope": slope, "intercept": icpt, "r_squared": r2,
               "c0_estimate": -slope}
    _write_json(os.path.join(outdir, "heat_tail.json"), cfg, scfg.seed, summary)
    print(f"heat tail: slope {slope:+.4f} (c0 ~ {-slope:.4f}), R^2 {r2:.3f}")
    return 0


def cmd_validate(cfg, fol, scfg, outdir, args):
    from .validate import run_validation

    report = run_validation(cfg, fol, scfg, quick=args.quick)
    _write_json(os.path.join(outdir, "validate.json"), cfg, scfg.seed, report)
    failed = [name for name, entry in report["checks"].items()
              if not entry["passed"]]
    for name, entry in report["checks"].items():
        mark = "PASS" if entry["passed"] else "FAIL"
        print(f"[{mark}] {name}: {entry['detail']}")
    return 1 if failed else 0


_COMMANDS = {
    "singularities": cmd_singularities,
    "lyapunov": cmd_lyapunov,
    "occupation": cmd_occupation,
    "similarity": cmd_similarity,
    "contraction": cmd_contraction,
    "heat-tail": cmd_heat_tail,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="folisim",
        description="Leafwise Brownian simulation for singular holomorphic "
                    "foliations")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default="out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--horizon", type=float, default=None)
    parser.add_argument("--threads", type=int, default=1,
                        help="numba thread count for the path kernels")
    parser.add_argument("--paths-csv", default=None,
                        help="also dump sample paths as CSV (occupation)")
    parser.add_argument("--quick", action="store_true",
                        help="reduced sample sizes (validate)")
    args = parser.parse_args(argv)

    if args.threads and args.threads > 0:
        try:
            import numba

            numba.set_num_threads(max(1, args.threads))
        except Exception:
            pass

    try:
        cfg = cfgmod.load_config(args.config)
        fol = cfgmod.foliation_from_config(cfg)
        scfg = cfgmod.sampler_from_config(cfg, seed=args.seed,
                                          horizon=args.horizon)
        os.makedirs(args.out, exist_ok=True)
        rc = _COMMANDS[args.command](cfg, fol, scfg, args.out, args)
    except FolisimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return rc


if __name__ == "__main__":
    sys.exit(main())
