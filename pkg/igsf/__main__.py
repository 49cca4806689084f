import sys

from igsf.cli import main

sys.exit(main())
