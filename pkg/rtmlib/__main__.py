import sys

from rtmlib.cli import main

sys.exit(main())
