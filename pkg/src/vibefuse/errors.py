"""Exception types shared across the package."""


class VibefuseError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(VibefuseError):
    """Invalid geometry definition or mesh construction failure."""


class ElementQualityError(VibefuseError):
    """Degenerate element encountered during integration."""


class SolverError(VibefuseError):
    """Linear solve or eigensolve failed a residual or convergence check."""


class SamplingError(VibefuseError):
    """Sample generation could not satisfy its constraints."""


class DatasetError(VibefuseError):
    """Dataset content violates its invariants or files are inconsistent."""


class TrainingError(VibefuseError):
    """Emulator training diverged or produced non-finite values."""


class FitError(VibefuseError):
    """Gaussian-process fit failed (non-PD covariance, degenerate design)."""


class ConfigError(VibefuseError):
    """Configuration file is malformed or fails validation."""
