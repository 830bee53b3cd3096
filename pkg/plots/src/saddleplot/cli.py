"""Command-line entry point.

Either pass a JSON figure spec or describe the figure with flags:

  saddleplot --spec figure.json
  saddleplot --trace a.csv:methodA --trace b.csv:methodB \\
             --x comm_rounds --y dist_sq --log-y -o figure.png

Exit codes: 0 figure written, 2 bad arguments or spec, 3 malformed trace
or missing column, 4 empty trace, 5 unwritable output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .render import EmptyTraceError, FigureSpec, TraceDataError, render

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_TRACE = 3
EXIT_EMPTY = 4
EXIT_OUTPUT = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saddleplot", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--spec", help="JSON figure spec (overrides the flags)")
    parser.add_argument("--trace", action="append", default=[],
                        metavar="PATH[:LABEL]", help="trace CSV with optional label")
    parser.add_argument("--x", default="comm_rounds",
                        choices=["comm_rounds", "round", "local_iters"])
    parser.add_argument("--y", default="dist_sq",
                        choices=["dist_sq", "gap", "consensus_err"])
    parser.add_argument("--log-y", action="store_true", default=False)
    parser.add_argument("--linear-y", dest="log_y", action="store_false")
    parser.add_argument("--title", default=None)
    parser.add_argument("-o", "--output", default="figure.png")
    return parser


def _spec_from_args(args) -> FigureSpec:
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except OSError as exc:
            raise ValueError(f"cannot read spec {args.spec}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"spec {args.spec} is not valid JSON: {exc}") from exc
        return FigureSpec.from_dict(doc)
    traces = []
    for entry in args.trace:
        path, _, label = entry.partition(":")
        traces.append((path, label or Path(path).stem))
    return FigureSpec(traces=tuple(traces), x_column=args.x, y_column=args.y,
                      log_y=args.log_y, title=args.title, output=args.output)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
    except (ValueError, KeyError) as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        out = render(spec)
    except EmptyTraceError as exc:
        print(f"empty trace: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except TraceDataError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(out)
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
