import sys

from ocean_fm.cli import main

sys.exit(main())
