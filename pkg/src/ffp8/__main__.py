"""Module entry point: python -m ffp8 <subcommand> ..."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
