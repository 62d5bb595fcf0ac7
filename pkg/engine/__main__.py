import sys

from dotenv import load_dotenv

# Load local .env before the engine reads env vars at import time.
load_dotenv()

from engine.cli import main  # noqa: E402

sys.exit(main())
