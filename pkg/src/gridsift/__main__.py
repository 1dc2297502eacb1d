"""`python -m gridsift` entry point."""

import sys

from gridsift.cli import main

if __name__ == "__main__":
    sys.exit(main())
