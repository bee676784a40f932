"""Frame latency of the feature-classifier pipeline for several track counts and worker counts.

    python3 scripts/bench_latency.py --tracks 50 100 200 --workers 1 2
"""

import argparse
import json
import os

from evdetect.pipeline import bench, bench_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tracks", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--out")
    args = ap.parse_args()

    print(f"{os.cpu_count()} CPU(s) visible")
    model = bench_model(0)
    rows = []
    print(f"{'tracks':>7}{'workers':>9}{'mean ms':>10}{'p50 ms':>9}{'p99 ms':>9}{'max ms':>9}  verdict")
    for n in args.tracks:
        for w in args.workers:
            r = bench(model, n_tracks=n, n_frames=args.frames, workers=w)
            rows.append(r.to_dict() | {"tracks": n})
            print(f"{n:>7}{w:>9}{r.mean_ms:>10.2f}{r.p50_ms:>9.2f}{r.p99_ms:>9.2f}{r.max_ms:>9.2f}  "
                  f"{'PASS' if r.passed else 'FAIL'}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(rows, f, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
