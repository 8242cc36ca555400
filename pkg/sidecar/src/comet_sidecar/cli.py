"""Run the scoring service: comet-sidecar --model <id> --port <port>."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .backends import DEFAULT_MODEL_ID, backend_for


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="comet-sidecar", description=__doc__)
    parser.add_argument("--model", default=DEFAULT_MODEL_ID,
                        help="model id; schemes: comet:<ckpt> (default) or embed:<ckpt>")
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--batch-size", type=int, default=8,
                        help="inference sub-batch size")
    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    app = create_app(backend_for(args.model), batch_size=args.batch_size)
    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
