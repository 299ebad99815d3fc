import sys

from rof_harness.cli import main

sys.exit(main())
