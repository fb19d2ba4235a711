import sys

from gasl.cli import main

sys.exit(main())
