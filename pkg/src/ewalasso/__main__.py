"""Module entry point: ``python -m ewalasso``."""

import sys

from .cli import main

sys.exit(main())
