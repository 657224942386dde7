import sys

from ckt.cli import main

sys.exit(main())
