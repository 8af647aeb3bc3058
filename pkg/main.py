import sys

from chain_counter.cli import main


if __name__ == "__main__":
    sys.exit(main())
