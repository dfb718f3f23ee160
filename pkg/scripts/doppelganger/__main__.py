import sys

from doppelganger.cli import main

sys.exit(main())
