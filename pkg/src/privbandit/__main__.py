import sys

from privbandit.cli import main

sys.exit(main())
