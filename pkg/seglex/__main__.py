import sys

from seglex.cli import main

sys.exit(main())
