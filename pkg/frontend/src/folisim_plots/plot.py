"""Render figures from folisim CSV outputs.

Usage: folisim-plot KIND INPUT --out IMG

Kinds: exponents (convergence with CI bands), occupation (heatmap),
contraction (decay curves), heat-tail (exponential tail fit). The renderer
consumes only the documented CSV contract; schema mismatches and empty
inputs exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class SchemaMismatch(Exception):
    pass


class EmptyInput(Exception):
    pass


REQUIRED = {
    "exponents": ["bundle", "t", "mean", "ci_lo", "ci_hi"],
    "occupation": ["chart", "i", "j", "center_mod_a", "center_mod_b", "mass"],
    "contraction": ["path", "theta", "t", "ratio"],
    "heat-tail": ["delta", "R", "survival"],
}


def read_rows(path, kind):
    """Parse a folisim CSV: optional leading # metadata line, then header."""
    with open(path) as fh:
        meta = ""
        pos = fh.tell()
        first = fh.readline()
        if first.startswith("#"):
            meta = first[1:].strip()
        else:
            fh.seek(pos)
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in REQUIRED[kind] if c not in cols]
        if missing:
            raise SchemaMismatch(
                f"{path}: missing columns {missing}; have {cols}")
        rows = list(reader)
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return rows, meta


def _f(rows, col):
    return np.array([float(r[col]) for r in rows])


def render_exponents(rows, meta, out):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    bundles = sorted({r["bundle"] for r in rows})
    for b in bundles:
        sub = [r for r in rows if r["bundle"] == b]
        t = _f(sub, "t")
        mean = _f(sub, "mean")
        lo = _f(sub, "ci_lo")
        hi = _f(sub, "ci_hi")
        order = np.argsort(t)
        t, mean, lo, hi = t[order], mean[order], lo[order], hi[order]
        line, = ax.plot(t, mean, label=f"bundle {b}")
        ax.fill_between(t, lo, hi, alpha=0.25, color=line.get_color())
    ax.set_xlabel("diffusion time t")
    ax.set_ylabel("mean log-norm of the holonomy cocycle")
    ax.set_title("Lyapunov convergence with 95% bands")
    ax.legend()
    _finish(fig, ax, meta, out)


def render_occupation(rows, meta, out):
    charts = sorted({int(r["chart"]) for r in rows})
    bins = max(max(int(r["i"]) for r in rows),
               max(int(r["j"]) for r in rows)) + 1
    total = sum(float(r["mass"]) for r in rows)
    if not np.isclose(total, 1.0, atol=1e-6):
        raise SchemaMismatch(f"masses sum to {total}, expected 1")
    fig, axes = plt.subplots(1, len(charts),
                             figsize=(4.2 * len(charts), 4.2), squeeze=False)
    for ax, c in zip(axes[0], charts):
        grid = np.zeros((bins, bins))
        for r in rows:
            if int(r["chart"]) == c:
                grid[int(r["j"]), int(r["i"])] = float(r["mass"])
        im = ax.imshow(grid, origin="lower", cmap="magma")
        ax.set_title(f"chart {c}")
        ax.set_xlabel("|first coordinate| bin")
        ax.set_ylabel("|second coordinate| bin")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.suptitle("occupation measure" + (f"  [{meta}]" if meta else ""),
                 fontsize=8)
    fig.savefig(out, dpi=130, bbox_inches="tight")
    plt.close(fig)


def render_contraction(rows, meta, out):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    thetas = sorted({float(r["theta"]) for r in rows})
    paths = sorted({int(r["path"]) for r in rows})
    for th in thetas:
        for p in paths:
            sub = [r for r in rows
                   if float(r["theta"]) == th and int(r["path"]) == p]
            if not sub:
                continue
            t = _f(sub, "t")
            ratio = _f(sub, "ratio")
            ax.semilogy(t, ratio, alpha=0.4, lw=0.8,
                        label=f"theta={th}" if p == paths[0] else None)
    ax.set_xlabel("diffusion time t")
    ax.set_ylabel("transverse distance / (theta dist(gamma, S))")
    ax.set_title("section contraction along Brownian paths")
    ax.legend()
    _finish(fig, ax, meta, out)


def render_heat_tail(rows, meta, out):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    deltas = sorted({float(r["delta"]) for r in rows})
    xs_all, ys_all = [], []
    for d in deltas:
        sub = [r for r in rows if float(r["delta"]) == d]
        R = _f(sub, "R")
        surv = _f(sub, "survival")
        keep = surv > 0
        x = R[keep] ** 2 / d
        y = np.log(surv[keep])
        xs_all.append(x)
        ys_all.append(y)
        ax.plot(x, y, "o", label=f"delta={d}")
    x = np.concatenate(xs_all)
    y = np.concatenate(ys_all)
    if len(x) >= 2:
        A = np.vstack([x, np.ones_like(x)]).T
        slope, icpt = np.linalg.lstsq(A, y, rcond=None)[0]
        xs = np.linspace(x.min(), x.max(), 50)
        ax.plot(xs, slope * xs + icpt, "k--",
                label=f"fit slope {slope:+.3f}")
    ax.set_xlabel("R^2 / delta")
    ax.set_ylabel("log P(sup displacement >= R)")
    ax.set_title("window-displacement tail on the reference disk")
    ax.legend()
    _finish(fig, ax, meta, out)


def _finish(fig, ax, meta, out):
    if meta:
        ax.annotate(meta, xy=(0.01, 0.01), xycoords="figure fraction",
                    fontsize=6, color="gray")
    fig.savefig(out, dpi=130, bbox_inches="tight")
    plt.close(fig)


RENDERERS = {
    "exponents": render_exponents,
    "occupation": render_occupation,
    "contraction": render_contraction,
    "heat-tail": render_heat_tail,
}


def render(kind, input_path, out_path):
    rows, meta = read_rows(input_path, kind)
    RENDERERS[kind](rows, meta, out_path)
    return out_path


def main(argv=None):
    parser = argparse.ArgumentParser(prog="folisim-plot",
                                     description=__doc__)
    parser.add_argument("kind", choices=sorted(RENDERERS))
    parser.add_argument("input")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        render(args.kind, args.input, args.out)
    except (SchemaMismatch, EmptyInput, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
