#!/usr/bin/env python3
"""Regenerate docs/cli.md from the argparse definitions.

Run from the repo root after changing CLI flags:

    python3 scripts/generate_cli_docs.py
"""

from __future__ import annotations

import sys
from pathlib import Path

from scene_robust.cli import build_parser

SUBCOMMANDS = ("corrupt", "mine", "build-graph", "train-high", "train-fusion", "evaluate", "report")


def main() -> int:
    parser = build_parser()
    sections = ["# scene-robust CLI flag reference", "", "Generated by `scripts/generate_cli_docs.py`; do not edit by hand.", ""]
    sections += ["```", parser.format_help().rstrip(), "```", ""]
    subactions = next(
        a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction"
    )
    for name in SUBCOMMANDS:
        sub = subactions.choices[name]
        sections += [f"## {name}", "", "```", sub.format_help().rstrip(), "```", ""]
    out = Path(__file__).resolve().parent.parent / "docs" / "cli.md"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(sections), encoding="utf-8")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
