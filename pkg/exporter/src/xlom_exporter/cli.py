"""xlom-export command line: batch export and the /embed dev server."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .encoders import EncoderLoadError, load_encoder
from .export import ExportJob, export
from .server import DEFAULT_MAX_BATCH, serve


def cmd_export(args) -> int:
    job = ExportJob(
        store_path=Path(args.input),
        matrix_path=Path(args.out) / "matrix.emb",
        ids_path=Path(args.out) / "matrix.ids",
        encoder_id=args.encoder,
        batch_size=args.batch,
        normalize=not args.no_normalize,
    )
    count = export(job)
    print(f"exported {count} sentences with {args.encoder} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    encoder = load_encoder(args.encoder)
    server = serve(encoder, host=args.host, port=args.port, max_batch=args.max_batch)
    host, port = server.server_address[:2]
    print(f"serving {encoder.tag} (dim {encoder.dim}) on http://{host}:{port}/embed")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xlom-export",
                                     description="Embedding exporter for xlom")
    parser.add_argument("--version", action="version",
                        version=f"xlom-export {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode a sentence store into EMB1 files")
    p.add_argument("--in", dest="input", required=True, help="sentence store JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--encoder", default="bilingual-hash-v1:d256")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("serve", help="serve the /embed contract")
    p.add_argument("--encoder", default="bilingual-hash-v1:d256")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--max-batch", type=int, default=DEFAULT_MAX_BATCH)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EncoderLoadError, ValueError, OSError) as exc:
        print(f"xlom-export {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
