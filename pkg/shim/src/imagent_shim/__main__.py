"""Serve the shim: python3 -m imagent_shim [--port 8711] [--no-edit]."""

import argparse

import uvicorn

from .adapters import StubAdapter
from .server import create_app


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="imagent-shim",
        description="Reference model service speaking the imagent wire protocol.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8711)
    parser.add_argument(
        "--no-edit", action="store_true",
        help="declare supports_edit=false and answer /v1/edit with 501",
    )
    parser.add_argument(
        "--text-only-understand", action="store_true",
        help="declare supports_image_in_understand=false",
    )
    parser.add_argument("--max-concurrency", type=int, default=8)
    args = parser.parse_args(argv)

    adapter = StubAdapter(
        supports_edit=not args.no_edit,
        supports_image_in_understand=not args.text_only_understand,
    )
    uvicorn.run(create_app(adapter, args.max_concurrency), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
