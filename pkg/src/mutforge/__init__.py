"""Security-aware mutation testing for native and Python source trees."""

__version__ = "0.1.0"
