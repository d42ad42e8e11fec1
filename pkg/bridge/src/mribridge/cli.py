"""bridge: dump pooled ViT block features as MATF files plus a manifest.

    bridge --model encoder.pt --blocks 3,7,11 --images list.txt --out out/feats
    bridge --self-test golden.bin

--model accepts a pickled nn.Module checkpoint path or a "module:factory"
callable spec. --images is a text file with one PGM path per line.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import BridgeConfig, BridgeError, dump_features, self_test


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="bridge", description=__doc__)
    parser.add_argument("--model", help="pickled nn.Module path or module:factory spec")
    parser.add_argument("--blocks", default="3,7,11", help="comma-separated block indices (0-based)")
    parser.add_argument("--images", help="text file listing PGM image paths")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--input-size", type=int, default=224)
    parser.add_argument("--in-channels", type=int, default=3)
    parser.add_argument("--prefix-tokens", type=int, default=None,
                        help="leading non-spatial tokens to strip (default: infer)")
    parser.add_argument("--block-attr", default=None,
                        help="attribute path to the block list (default: probe)")
    parser.add_argument("--name", default="bridge", help="dataset name for the manifest")
    parser.add_argument("--split", default="test", choices=["train", "test"])
    parser.add_argument("--self-test", metavar="GOLDEN",
                        help="byte-compare the encoder against a golden MATF fixture and exit")
    args = parser.parse_args(argv)

    try:
        if args.self_test:
            self_test(args.self_test)
            print("self test ok")
            return 0
        if not (args.model and args.images and args.out):
            parser.error("--model, --images and --out are required")
        image_list = [
            line.strip()
            for line in Path(args.images).read_text().splitlines()
            if line.strip()
        ]
        cfg = BridgeConfig(
            model=args.model,
            images=image_list,
            out_dir=args.out,
            blocks=tuple(int(b) for b in args.blocks.split(",")),
            device=args.device,
            input_size=args.input_size,
            in_channels=args.in_channels,
            n_prefix_tokens=args.prefix_tokens,
            block_attr=args.block_attr,
            dataset_name=args.name,
            split=args.split,
        )
        manifest = dump_features(cfg)
        print(f"wrote features for {len(image_list)} images -> {manifest}")
        return 0
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
