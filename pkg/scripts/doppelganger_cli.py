#
# Command-line entry for the doppelganger toolkit.
# Run "python3 doppelganger_cli.py --help" for the list of subcommands.
#

import sys

from doppelganger.cli import main

if __name__ == "__main__":
    sys.exit(main())
