"""
Version information for the SVL desk engine.

Semantic Versioning: MAJOR.MINOR.PATCH
- MAJOR: Breaking changes (checkpoint or SVLT layout)
- MINOR: New features, backwards compatible
- PATCH: Bug fixes, no new features
"""

__version__ = "0.3.0"
__version_info__ = (0, 3, 0)

# Short version (e.g., "0.3")
__version_short__ = f"{__version_info__[0]}.{__version_info__[1]}"
