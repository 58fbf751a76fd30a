__all__ = ["__version__", "SCHEMA"]
__version__ = "0.1.0"

# Tag carried by every file the package reads or writes.
SCHEMA = "bellforge/1"
