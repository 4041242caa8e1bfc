"""Command line entry: render one figure from a spec file.

Exit codes: 0 drawn, 1 input data unusable (schema mismatch or nothing
to draw), 2 spec problem.
"""

import argparse
import sys

from . import __version__
from .figures import SpecError, load_spec, render
from .io import TableError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pondplots",
        description="Render figures from pondlab CSV outputs.")
    parser.add_argument("--version", action="version",
                        version=f"pondplots {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="draw the figure a spec asks for")
    p_render.add_argument("--spec", required=True,
                          help="path to a figure spec JSON file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out = render(load_spec(args.spec))
    except SpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return 2
    except TableError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
