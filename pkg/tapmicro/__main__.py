import sys

from tapmicro._cli import main

sys.exit(main())
