import logging

from quant_lab.utils.settings import Settings

# Create the logger instance
logger = logging.getLogger("quant_lab")
logger.setLevel(Settings.LOG_LEVEL)

# Create a formatter shared by every handler
formatter = logging.Formatter("%(asctime)s %(levelname)s: %(message)s")

# Console handler
console_handler = logging.StreamHandler()
console_handler.setLevel(Settings.LOG_LEVEL)
console_handler.setFormatter(formatter)
logger.addHandler(console_handler)

# File handler, only when a log file is configured
if Settings.LOG_FILE:
    file_handler = logging.FileHandler(Settings.LOG_FILE)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)
    logger.addHandler(file_handler)
