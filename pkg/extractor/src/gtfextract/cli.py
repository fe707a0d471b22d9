"""Command-line front end: ``gtf-extract MANIFEST [--set KEY=VALUE ...]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .manifest import ManifestError, load_manifest
from .pipeline import ExtractionError, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gtf-extract",
        description="extract multi-level image features and text embeddings into a dataset",
    )
    parser.add_argument("manifest", help="key=value manifest file")
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one manifest entry (repeatable)",
    )
    parser.add_argument("--quiet", action="store_true", help="only log errors")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        manifest = load_manifest(args.manifest, args.assignments)
        result = extract(manifest)
    except (ManifestError, ExtractionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for failure in result.failures:
        print(f"error: item {failure.item_id}: {failure.message}", file=sys.stderr)
    if result.index_path is not None:
        print(f"wrote {result.written} items: {result.index_path}")
    else:
        print("error: every item failed, nothing written", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
