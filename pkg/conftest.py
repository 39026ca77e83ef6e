import os

import django
import pytest

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "svl_desk.settings")
django.setup()


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", help="Also run tests tagged 'slow'")


def pytest_collection_modifyitems(config, items):
    # Mirror run_tests.py: classes tagged "slow" only run with --slow.
    if config.getoption("--slow"):
        return
    skip_slow = pytest.mark.skip(reason="tagged 'slow'; pass --slow to run")
    for item in items:
        if "slow" in getattr(getattr(item, "cls", None), "tags", ()):
            item.add_marker(skip_slow)
