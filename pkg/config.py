# Configuration settings for regvec
import os
import logging
from typing import Dict, Any

# Set up logging
logger = logging.getLogger(__name__)

try:
    from dotenv import load_dotenv
    # Load environment variables from .env file if it exists
    load_dotenv()
    logger.info("Loaded environment variables from .env file")
except ImportError:
    logger.warning("dotenv package not installed. Environment variables will only be loaded from system.")

# Run settings
DEFAULT_SEED = 0
DEFAULT_THREADS = 1
DEFAULT_OUT_DIR = "outputs"
DEFAULT_LOG_LEVEL = "INFO"

# Data settings
DEFAULT_PRESET = "movielens"
DEFAULT_SPLIT_RATIO = 0.8

# Metric settings
DEFAULT_K_TOP = 10
DEFAULT_CLAMP = True  # clamp predictions to the rating scale when scoring


def _env_bool(name: str, default: bool) -> bool:
    return os.environ.get(name, str(default)).strip().lower() in {"1", "true", "yes", "on"}


class Config:
    """Global configuration for regvec"""

    # Singleton instance
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(Config, cls).__new__(cls)
            cls._instance._initialize()
        return cls._instance

    def _initialize(self):
        """Initialize configuration from the environment"""
        self.seed = int(os.environ.get("REGVEC_SEED", DEFAULT_SEED))
        self.threads = int(os.environ.get("REGVEC_THREADS", DEFAULT_THREADS))
        self.out_dir = os.environ.get("REGVEC_OUT_DIR", DEFAULT_OUT_DIR)
        self.log_level = os.environ.get("REGVEC_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()

        self.preset = os.environ.get("REGVEC_PRESET", DEFAULT_PRESET)
        self.split_ratio = float(os.environ.get("REGVEC_SPLIT_RATIO", DEFAULT_SPLIT_RATIO))

        self.k_top = int(os.environ.get("REGVEC_K_TOP", DEFAULT_K_TOP))
        self.clamp = _env_bool("REGVEC_CLAMP", DEFAULT_CLAMP)

        logger.debug(f"Initialized configuration: seed={self.seed}, threads={self.threads}")

    def with_overrides(self, **overrides: Any) -> "Config":
        """Copy of this configuration with some values replaced (None values are ignored)"""
        # bypass __new__, which would hand back the singleton itself
        updated = object.__new__(Config)
        updated.__dict__.update(self.__dict__)
        for key, value in overrides.items():
            if value is None:
                continue
            if not hasattr(updated, key):
                raise AttributeError(f"Unknown configuration key: {key}")
            setattr(updated, key, value)
        return updated

    def as_dict(self) -> Dict[str, Any]:
        """Return configuration as dictionary (for run reports)"""
        return {
            "seed": self.seed,
            "threads": self.threads,
            "out_dir": self.out_dir,
            "log_level": self.log_level,
            "preset": self.preset,
            "split_ratio": self.split_ratio,
            "k_top": self.k_top,
            "clamp": self.clamp,
        }


# Create a global instance
config = Config()

def get_config() -> Config:
    """Get the global configuration instance"""
    return config
