"""Python bindings for the spext spatial-extremes library."""

try:
    from ._spext import *  # noqa: F401,F403
    from ._spext import SpextError, __doc__  # noqa: F401
except ImportError:  # in-tree build: the extension sits next to this package
    from _spext import *  # type: ignore # noqa: F401,F403
    from _spext import SpextError, __doc__  # type: ignore # noqa: F401

__version__ = "0.1.0"
