"""Localization of the Hard study under different frozen height ranges.

For each (start, end) pair prints per-seed top-candidate IoU per frame
(``h`` marks a heat-peak hit) and how many seeds localize >= 4/5 frames.

    python3 scripts/hard_sweep.py --model model.json 0.055:0.16 0.06:0.2
"""
import argparse
import dataclasses

from markerforge import study
from markerforge.scenegen import SequenceSpec
from markerforge.study import HARD, StudyConfig, load_or_train, run_study


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("ranges", nargs="*", default=["0.055:0.16"], help="start:end height fractions")
    ap.add_argument("--model", default=None, help="model JSON; trains the default corpus when omitted")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    model = load_or_train(args.model, 0)
    frozen = study.HARD_SEQUENCE
    try:
        for r in args.ranges:
            lo, hi = (float(v) for v in r.split(":"))
            study.HARD_SEQUENCE = dataclasses.replace(frozen, start_height_fraction=lo, end_height_fraction=hi)
            print(f"== {lo} {hi}")
            ok = 0
            for seed in range(args.seeds):
                rep = run_study(StudyConfig(HARD, seed), model)
                cells = " ".join(f"{f.top_iou:.2f}{'h' if f.heat_hit else '.'}" for f in rep.frames)
                print(f"{seed:2d}  {cells}  {rep.pattern}  {rep.localized_count}")
                ok += rep.passed
            print(f"seeds passing {ok}/{args.seeds}")
    finally:
        study.HARD_SEQUENCE = frozen


if __name__ == "__main__":
    main()
