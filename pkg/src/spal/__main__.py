"""``python -m spal`` dispatches to the command-line driver."""

import sys

from .cli import main

sys.exit(main())
