"""Failure classes the CLI maps to distinct exit codes."""


class ConfigError(ValueError):
    """Bad configuration, flags, or argument combinations (exit 2)."""


class DataIOError(OSError):
    """Unreadable/corrupt files or failed writes, with path context (exit 3)."""


class NumericalError(RuntimeError):
    """Non-finite values or failed numerical checks during a run (exit 4)."""


class GeometryError(ValueError):
    """Invalid port-grid geometry."""


class MetricError(ValueError):
    """Ill-posed metric request (e.g. zero target energy)."""
