"""Desk-scale training runs over several seeds, one line of metrics per run.

Reproduces the classification and regression setups of the acceptance
suite (400 samples/level, 32x32 patches, 10 epochs, batch 128, lr 0.01)
and shows how much the outcome depends on the initialisation seed.

    python scripts/desk_train.py --head reg --seeds 0 1 2 3 4
    python scripts/desk_train.py --head cls --epochs 10 --input-scale 0.03125
"""

import argparse
import json
import tempfile
import time
from dataclasses import replace

from diffsigma.cli import DEFAULT_SEED
from diffsigma.datasets import write_corpus
from diffsigma.imageio import scan_dataset
from diffsigma.model import build_network, micro_config
from diffsigma.rng import derive_seed
from diffsigma.training import TrainConfig, build_dataset, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--head", choices=["reg", "cls"], default="reg")
    ap.add_argument("--seeds", type=int, nargs="+", default=[DEFAULT_SEED])
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--data", help="image directory (default: synthetic corpus)")
    ap.add_argument("--input-scale", type=float)
    ap.add_argument("--embed-relu", choices=["on", "off"])
    args = ap.parse_args()

    head = "regression" if args.head == "reg" else "classification"
    with tempfile.TemporaryDirectory() as tmp:
        data = args.data
        if data is None:
            write_corpus(tmp, 10, 64, 64, seed=DEFAULT_SEED)
            data = tmp
        manifest = scan_dataset(data)
        for seed in args.seeds:
            cfg = TrainConfig(seed=seed, epochs=args.epochs)
            net = micro_config(head, patch_size=cfg.patch_size)
            if args.input_scale is not None:
                net = replace(net, input_scale=args.input_scale)
            if args.embed_relu is not None:
                net = replace(net, embed_relu=args.embed_relu == "on")
            train_set, val_set = build_dataset(manifest, cfg)
            model = build_network(net, seed=derive_seed(seed, 42))
            t0 = time.perf_counter()
            history = train(model, train_set, val_set, cfg)
            metrics = history.final_metrics
            shown = metrics.get("accuracy", metrics.get("mae_per_level"))
            print(json.dumps({"seed": seed, "metric": shown, "seconds": round(time.perf_counter() - t0, 1)}),
                  flush=True)


if __name__ == "__main__":
    main()
