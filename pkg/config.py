import os

from dotenv import load_dotenv

BASE_DIR = os.path.dirname(os.path.abspath(__file__))


class Config:
    def __init__(self, config_file=None):
        # a KEY=value file fills in only what the environment leaves unset
        if config_file:
            load_dotenv(config_file, override=False)

        # --- Where things live ---
        self.STORES_DIR = os.environ.get("WEXTRACT_STORES", "stores")
        self.RULES_FILE = os.environ.get("WEXTRACT_RULES", os.path.join(BASE_DIR, "resources", "rules.txt"))
        self.CLUES_FILE = os.environ.get("WEXTRACT_CLUES", os.path.join(BASE_DIR, "resources", "clues.txt"))

        # --- Freshness windows, in seconds (ticks in simulation) ---
        self.SOCIAL_VALIDITY = float(os.environ.get("WEXTRACT_SOCIAL_VALIDITY", 86400))
        self.PATTERN_VALIDITY = float(os.environ.get("WEXTRACT_PATTERN_VALIDITY", 604800))

        # "refresh" moves cache timestamps on every cached answer, "literal" only on from-scratch
        self.REFRESH_MODE = os.environ.get("WEXTRACT_REFRESH_MODE", "refresh")

        # --- Fetching ---
        self.TIMEOUT = float(os.environ.get("WEXTRACT_TIMEOUT", 10))
        self.USER_AGENT = os.environ.get("WEXTRACT_USER_AGENT", "wextract/1.0 (browserless price extractor)")
        self.FRAGMENT_CAP = 1000

        # --- Query service ---
        self.SERVE_HOST = os.environ.get("WEXTRACT_HOST", "127.0.0.1")
        self.SERVE_PORT = int(os.environ.get("WEXTRACT_PORT", 8080))
