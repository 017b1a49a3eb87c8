"""``python -m egattack``."""

import sys

from .cli import main

sys.exit(main())
