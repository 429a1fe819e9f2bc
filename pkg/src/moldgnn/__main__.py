import sys

from moldgnn.cli import main

sys.exit(main())
