import sys

from densestyle_extractor.cli import main

sys.exit(main())
