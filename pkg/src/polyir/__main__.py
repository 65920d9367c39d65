import sys

from polyir.cli import main

sys.exit(main())
