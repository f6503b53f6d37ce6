# utils/settings.py
import os

from dotenv import load_dotenv


class Settings:
    # Load environment variables from the .env file
    load_dotenv()

    # Report schema
    SCHEMA_VERSION = 1

    # Logging
    LOG_LEVEL = os.environ.get("QLAB_LOG_LEVEL", "INFO").upper()
    LOG_FILE = os.environ.get("QLAB_LOG_FILE")

    # Execution
    THREADS = int(os.environ.get("QLAB_THREADS", "1"))
    SHOW_PROGRESS = os.environ.get("QLAB_PROGRESS", "0") == "1"

    # Numerics
    AUTO_LAMBDA_FACTOR = 0.01
    RANK_TOLERANCE = 1e-12
    PIVOT_FLOOR = 1e-300
    ORACLE_NODE_BUDGET = 10**7

    # Probability parameters for the high-probability bounds
    DEFAULT_P = 2.0
    DEFAULT_P_PRIME = 2.0
    MC_STD_ERRORS = 3.0
