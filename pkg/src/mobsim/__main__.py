import sys

from mobsim.cli import main

sys.exit(main())
