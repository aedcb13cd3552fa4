import sys

from practiq.cli import main

sys.exit(main())
