"""Grant-free random access for LEO satellite networks with learned (eRACH) and baseline protocols."""

__version__ = "0.1.0"
