import sys

from ftopt.cli import main

sys.exit(main())
