import sys

from arete.cli import main

sys.exit(main())
