"""FRMDL001 container exporter for pretrained CNN backbones and test models."""

__version__ = "0.1.0"


class ExportError(Exception):
    """The source checkpoint does not match the expected layer inventory."""
