"""CLI: read a job manifest, run the encoder, write the dataset pair."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderError
from .export import ExportError, load_job, run_export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export embedding-dataset files from text/audio inputs",
    )
    parser.add_argument("--job", required=True, help="export job JSON manifest")
    parser.add_argument("--out", required=True, help="output dataset CSV path")
    args = parser.parse_args(argv)
    try:
        out = run_export(load_job(args.job), args.out)
    except (ExportError, EncoderError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
