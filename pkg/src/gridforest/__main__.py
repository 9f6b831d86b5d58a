import sys

from gridforest.cli import main

sys.exit(main())
