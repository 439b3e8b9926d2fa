import sys

from .runner.command_line import main

sys.exit(main())
