"""CLI: run one job-spec JSON document.

    encoder-bridge run job.json

Job types: extract (CXGB embeddings), align (image-text alignment CSV),
reid (pairwise re-identification CSV).
"""

from __future__ import annotations

import argparse
import sys

from .errors import BridgeError
from .jobs import run_job_file


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="encoder-bridge",
                                     description="Produce embedding and score files "
                                                 "for the metrics engine.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    run = sub.add_parser("run", help="execute a job-spec JSON document")
    run.add_argument("job", help="path to the job spec")
    args = parser.parse_args(argv)
    try:
        output = run_job_file(args.job)
    except BridgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
