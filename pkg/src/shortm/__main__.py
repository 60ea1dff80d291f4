import sys

from shortm.cli import main

sys.exit(main())
