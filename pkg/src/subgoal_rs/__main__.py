import sys

from subgoal_rs.cli import main

sys.exit(main())
