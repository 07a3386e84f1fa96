import sys

from dodgekit.main import main

sys.exit(main())
