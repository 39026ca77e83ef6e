"""
Django settings for the svl_desk project.

The project hosts no web surface: Django provides the management-command CLI,
the settings layer and the test runner for the ``svl`` spiking engine app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

import os
from pathlib import Path

import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Environment configuration
env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, ""),
    SVL_THREADS=(int, os.cpu_count() or 1),
    SVL_LOG_LEVEL=(str, "INFO"),
    SVL_CHECK_SPIKES=(bool, True),
    SVL_DEFAULT_SEED=(int, 7),
)

ENV_FILE = BASE_DIR / ".env"
if ENV_FILE.exists():
    environ.Env.read_env(ENV_FILE)


# Commands never sign anything; a key is still required by django.setup()
SECRET_KEY = env("SECRET_KEY", default="svl-desk-insecure-key")

DEBUG = env.bool("DEBUG", default=False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "svl",
]

# No models: commands and tests run without a database
DATABASES = {}


# Engine configuration

# Worker cap for parallel record loading and evaluation shards
SVL_THREADS = max(1, env.int("SVL_THREADS"))

# Assert integer spike ranges on every layer and timestep
SVL_CHECK_SPIKES = env.bool("SVL_CHECK_SPIKES")

SVL_DEFAULT_SEED = env.int("SVL_DEFAULT_SEED")

SVL_LOG_LEVEL = env("SVL_LOG_LEVEL").upper()


# Internationalization
# https://docs.djangoproject.com/en/6.0/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "svl": {
            "handlers": ["console"],
            "level": SVL_LOG_LEVEL,
            "propagate": False,
        },
    },
}
