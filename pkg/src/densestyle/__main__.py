import sys

from densestyle.cli import main

sys.exit(main())
