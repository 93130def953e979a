import sys

from smpstop.cli import main

sys.exit(main())
