import sys

from cgyroperf.cli import main

sys.exit(main())
