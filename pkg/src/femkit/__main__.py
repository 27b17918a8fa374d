import sys

from femkit.cli import main

sys.exit(main())
