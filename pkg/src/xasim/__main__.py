import sys

from xasim.cli import main

sys.exit(main())
