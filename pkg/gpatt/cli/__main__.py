import sys

from gpatt.cli.main import main

sys.exit(main())
