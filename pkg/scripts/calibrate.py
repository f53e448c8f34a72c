"""Decode success against marker height on plain 768x768 scenes.

Sweeps 20 geometric height fractions x 10 seeds with the Simple study code
and prints a success table; the frozen study fractions are picked from it.

    python3 scripts/calibrate.py --model model.json
"""
import argparse
import time

import numpy as np

from markerforge.detector import MarkerKind, model_from_json
from markerforge.pipeline import default_pool, run_urf
from markerforge.scenegen import Placement, SceneSpec, compose_scene
from markerforge.study import SIMPLE_CODE, load_or_train


def sweep(model, fractions, seeds, code=SIMPLE_CODE):
    pool = default_pool()
    table = np.zeros((len(fractions), len(seeds)), dtype=bool)
    for i, hf in enumerate(fractions):
        for j, seed in enumerate(seeds):
            spec = SceneSpec((768, 768), placements=(Placement(MarkerKind.ARTCODE, code, (0.5, 0.5), hf),))
            grid, _ = compose_scene(spec, seed)
            report = run_urf(grid, model, pool)
            table[i, j] = [c.outcome.payload for c in report.decoded] == [code]
    return table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default=None, help="model JSON; trains the default corpus when omitted")
    ap.add_argument("--lo", type=float, default=0.02)
    ap.add_argument("--hi", type=float, default=0.4)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    model = model_from_json(open(args.model).read()) if args.model else load_or_train(None, 0)
    fractions = np.geomspace(args.lo, args.hi, 20)
    t0 = time.perf_counter()
    table = sweep(model, fractions, range(args.seeds))
    for hf, row in zip(fractions, table):
        print(f"{hf:.4f}  {round(hf * 768):4d}px  {row.sum():2d}/{len(row)}  " + "".join("#" if v else "." for v in row))
    print(f"elapsed {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
