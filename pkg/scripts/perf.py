"""Timing of the window scan and full scan+decode on a cluttered 1024x768 frame.

    python3 scripts/perf.py --model model.json
"""
import argparse
import time

from markerforge.detector import MarkerKind, WindowSpec, scan_windows
from markerforge.imaging import PixelGrid
from markerforge.pipeline import default_pool, run_urf
from markerforge.scenegen import Background, Placement, SceneSpec, compose_scene
from markerforge.study import load_or_train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default=None)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    model = load_or_train(args.model, 0)
    spec = SceneSpec((1024, 768), Background("clutter", 6.0),
                     placements=(Placement(MarkerKind.ARTCODE, "1:2:2:3:3:4", (0.4, 0.5), 0.3),))
    grid, _ = compose_scene(spec, 8)
    pool = default_pool()
    run_urf(grid, model, pool)
    for _ in range(args.repeats):
        fresh = PixelGrid(grid.luma.copy())
        t0 = time.perf_counter()
        scan_windows(fresh, model, WindowSpec())
        t1 = time.perf_counter()
        run_urf(fresh, model, pool)
        t2 = time.perf_counter()
        print(f"scan {t1 - t0:.3f}s  scan+decode {t2 - t1:.3f}s")


if __name__ == "__main__":
    main()
