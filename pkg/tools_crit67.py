import time

import numpy as np

from folisim import examples
from folisim.brownian import EnsembleWalker, SamplerConfig
from folisim.occupation import (Binning, NearPlaneAccumulator,
                                OccupationAccumulator, tv_distance)

fol2 = examples.deg2_p2()
cfg = SamplerConfig(h=0.1, horizon=10000.0, seed=77, rtol=1e-6)
binning = Binning(n_charts=3)
checkpoints = [100.0, 1000.0, 10000.0]
steps_at = [int(round(T / cfg.h)) for T in checkpoints]


def run(start, tag):
    w = EnsembleWalker(fol2, [start] * 16, cfg)
    acc = OccupationAccumulator(fol2, binning)
    acc.update(w, cfg.h)
    hists = {}
    t0 = time.time()
    for k in range(1, steps_at[-1] + 1):
        w.step()
        acc.update(w, cfg.h)
        if k in (1000, 10000, 50000):
            rate = (time.time() - t0) / k * 1000
            print(f"{tag}: {k} records, {rate:.2f} ms/record, "
                  f"alive {int(w.alive.sum())}", flush=True)
        if k in steps_at:
            hists[k * cfg.h] = acc.snapshot()
    return hists


t0 = time.time()
ha = run(examples.GENERIC_START_2D, "A")
hb = run(examples.SECOND_START_2D, "B")
tvs = {T: tv_distance(ha[T], hb[T]) for T in ha}
print("CRIT6 matched-seed TV:", {T: round(v, 4) for T, v in sorted(tvs.items())},
      "total", round(time.time() - t0, 1), flush=True)

fol3 = examples.deg2_p3()
start = np.array([0.31 + 0.12j, -0.22 + 0.27j, 0.01 + 0.0j])
w = EnsembleWalker(fol3, [start] * 16, cfg)
npa = NearPlaneAccumulator(fol3, 0.05)
npa.update(w)
fr = {}
t0 = time.time()
for k in range(1, steps_at[-1] + 1):
    w.step()
    npa.update(w)
    if k in (1000, 10000, 50000):
        print(f"P3: {k} records, {(time.time() - t0) / k * 1000:.2f} ms/record, "
              f"frac {npa.fraction():.4f}", flush=True)
    if k in steps_at:
        fr[k * cfg.h] = npa.fraction()
print("CRIT7 near-plane fractions:",
      {T: round(v, 4) for T, v in sorted(fr.items())}, flush=True)
print("statuses:", np.bincount(w.status, minlength=3))
