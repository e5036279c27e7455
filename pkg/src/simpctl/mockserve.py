"""Line-protocol child process exposing the builtin mock simplifiers.

Usage: ``python -m simpctl.mockserve <name>`` where name is one of the
:func:`simpctl.bridge.builtin_mocks` keys. Reads one escaped input per
stdin line, writes one escaped output line each, exits non-zero on
protocol violations. Doubles as the reference implementation of the
subprocess wire protocol.
"""

from __future__ import annotations

import sys

from .bridge import builtin_mocks, escape_line, unescape_line
from .errors import ToolError


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    mocks = builtin_mocks()
    if len(argv) != 1 or argv[0] not in mocks:
        print(f"usage: python -m simpctl.mockserve {{{'|'.join(sorted(mocks))}}}", file=sys.stderr)
        return 1
    fn = mocks[argv[0]]
    try:
        for line in sys.stdin:
            text = unescape_line(line.rstrip("\n"))
            sys.stdout.write(escape_line(fn(text)) + "\n")
            sys.stdout.flush()
    except ToolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
