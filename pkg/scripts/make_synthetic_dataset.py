"""Write a deterministic synthetic image directory usable wherever a dataset is expected.

    python scripts/make_synthetic_dataset.py data/synth --count 24 --height 512 --width 768
"""

import argparse

from diffsigma.datasets import write_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--count", type=int, default=24)
    ap.add_argument("--height", type=int, default=128)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--channels", type=int, choices=[1, 3], default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--format", choices=["png", "pgm", "ppm"], default="png")
    args = ap.parse_args()
    paths = write_corpus(args.out, args.count, args.height, args.width, args.seed, args.channels,
                         suffix=f".{args.format}")
    print(f"wrote {len(paths)} images to {args.out}")


if __name__ == "__main__":
    main()
