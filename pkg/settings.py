import os
import logging

# Runtime configuration using environment variables


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == '':
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


LOG_LEVEL = os.getenv('GGM_LOG_LEVEL', 'INFO').upper()
RESULTS_DB = os.getenv('GGM_RESULTS_DB', 'ggm_results.db')
SWEEP_WORKERS = _env_int('GGM_SWEEP_WORKERS', 1)
REJECTION_BUDGET = _env_int('GGM_REJECTION_BUDGET', 10000)
SINGULAR_RTOL = _env_float('GGM_SINGULAR_RTOL', 1e-12)
MAX_SERVICE_DIM = _env_int('GGM_MAX_SERVICE_DIM', 60)
RATE_LIMIT = os.getenv('GGM_RATE_LIMIT', '30 per minute')
CORS_ORIGINS = [
    origin.strip()
    for origin in os.getenv(
        'GGM_CORS_ORIGINS',
        'http://localhost:5000,http://127.0.0.1:5000,http://localhost:3000,http://127.0.0.1:3000'
    ).split(',')
    if origin.strip()
]


def get_logger(name: str) -> logging.Logger:
    """
    Return a named module logger at the configured level.
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
    return logger
