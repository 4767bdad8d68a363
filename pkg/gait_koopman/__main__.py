import sys

from gait_koopman.cli import main

sys.exit(main())
