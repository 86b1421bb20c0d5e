import sys

from castro.cli import main

sys.exit(main())
