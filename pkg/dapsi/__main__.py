import sys

from dapsi.cli import main

sys.exit(main())
