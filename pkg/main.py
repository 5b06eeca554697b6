"""
Entry point for the sselab command line
Runs strong-error, trace and scalar-test experiments
"""

import sys

from dotenv import load_dotenv

# Load environment variables before settings are read
load_dotenv()

from sselab.api.cli import main  # noqa: E402


if __name__ == "__main__":
    sys.exit(main())
