import sys

from linkxplore.cli import main

sys.exit(main())
