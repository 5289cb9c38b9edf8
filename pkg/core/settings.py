import os
from pathlib import Path
from decouple import config
import dj_database_url  # Parses DATABASE_URL for the run ledger

# ---------------------------------------------
# BASE DIRECTORY
# ---------------------------------------------
BASE_DIR = Path(__file__).resolve().parent.parent

# ---------------------------------------------
# SECURITY & ENVIRONMENT SETTINGS
# ---------------------------------------------
SECRET_KEY = config('SECRET_KEY', default='django-insecure-placeholder-key-for-dev')
DEBUG = config('DEBUG', default=True, cast=bool)

# ---------------------------------------------
# APPLICATION DEFINITION
# ---------------------------------------------
INSTALLED_APPS = [
    # Core Django Apps
    'django.contrib.auth',
    'django.contrib.contenttypes',
    # 3rd Party Apps
    'rest_framework',
    # Custom Apps
    'butterfly_app',
]

# ---------------------------------------------
# DATABASE CONFIGURATION (PostgreSQL-ready)
# ---------------------------------------------
DATABASES = {
    'default': dj_database_url.parse(
        config(
            'DATABASE_URL',
            default=f"sqlite:///{os.path.join(BASE_DIR, 'db.sqlite3')}"
        )
    )
}

# ---------------------------------------------
# INTERNATIONALIZATION
# ---------------------------------------------
LANGUAGE_CODE = 'en-us'
TIME_ZONE = config('TIME_ZONE', default='UTC')
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# ---------------------------------------------
# LOGGING
# ---------------------------------------------
LOG_LEVEL = config('LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'butterfly_app': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}

# ---------------------------------------------
# NUMERICAL DEFAULTS
# ---------------------------------------------
# Phase recovery
PHASE_TAU = config('PHASE_TAU', default=0.25, cast=float)
RECOVERY_TAU_1D = config('RECOVERY_TAU_1D', default=0.0625, cast=float)
TAU_STEP = config('TAU_STEP', default=0.025, cast=float)
TAU_MAX = config('TAU_MAX', default=0.5, cast=float)
DISCONTINUITY_CAP = config('DISCONTINUITY_CAP', default=32, cast=int)
# NUFFT point sets: per-coordinate perturbation of the cell centres, in grid spacings
NUFFT_JITTER = config('NUFFT_JITTER', default=0.1, cast=float)

# Sampling and low-rank approximation
PHASE_OVERSAMPLE_Q = config('PHASE_OVERSAMPLE_Q', default=2, cast=int)
ID_OVERSAMPLE_T = config('ID_OVERSAMPLE_T', default=5, cast=int)
ADAPTIVE_EPS = config('ADAPTIVE_EPS', default=1e-9, cast=float)
PINV_RTOL = config('PINV_RTOL', default=1e-12, cast=float)
DEFAULT_SEED = config('DEFAULT_SEED', default=0, cast=int)

# Benchmark harness
METRIC_SAMPLE_SIZE = config('METRIC_SAMPLE_SIZE', default=256, cast=int)
SCENARIO2_DENSE_LIMIT = config('SCENARIO2_DENSE_LIMIT', default=2 ** 16, cast=int)
REPORT_SCHEMA_VERSION = config('REPORT_SCHEMA_VERSION', default='1.0')

# Long-running acceptance tests (n=64 FIO, n=32 NUFFT, scaling sweep)
RUN_SLOW_TESTS = config('RUN_SLOW_TESTS', default=False, cast=bool)
