"""`python -m src.lowpass <subcommand>`: command line entry point."""

import sys

from .cli import main

sys.exit(main())
