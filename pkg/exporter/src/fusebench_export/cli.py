"""fusebench-export: serialize encoder embeddings to FEAT files."""

from __future__ import annotations

import argparse
import os
import sys

from .encoders import make_encoder
from .export import ExportManifest, export_embeddings


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fusebench-export",
        description="Embed an image/caption dataset with a pretrained encoder "
                    "and write FEAT feature files",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed images and captions into FEAT files")
    p.add_argument("--images", required=True, help="directory of <id>.<ext> images")
    p.add_argument("--captions", required=True, help="CSV with header id,caption")
    p.add_argument("--model", required=True,
                   help="CLIP checkpoint name (e.g. openai/clip-vit-large-patch14) "
                        "or hash:<dim> for the offline smoke-test encoder")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--labels", default=None,
                   help="optional label CSV passed through for the exported ids")
    p.add_argument("--batch-size", type=int, default=16)

    args = parser.parse_args(argv)
    try:
        encoder = make_encoder(args.model, batch_size=args.batch_size)
        os.makedirs(args.out, exist_ok=True)
        manifest = ExportManifest(
            images_dir=args.images,
            captions_path=args.captions,
            model_name=args.model,
            out_image_feat=os.path.join(args.out, "image.feat"),
            out_text_feat=os.path.join(args.out, "text.feat"),
            labels_in=args.labels,
            out_labels=os.path.join(args.out, "labels.csv") if args.labels else None,
        )
        summary = export_embeddings(manifest, encoder)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in summary.lines():
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
