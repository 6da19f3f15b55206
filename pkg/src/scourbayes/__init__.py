"""Population-based foundation-stiffness inference and scour detection for
monopile-supported towers."""

__version__ = "0.1.0"
