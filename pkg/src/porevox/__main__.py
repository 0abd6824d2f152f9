import sys

from porevox.cli import main

sys.exit(main())
