import sys

from dotenv import load_dotenv

# Ensure environment variables (RAZ_THREADS) are loaded before our components initialize.
load_dotenv()

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
