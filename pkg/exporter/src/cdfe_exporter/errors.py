class ExporterError(Exception):
    """Base class for exporter failures."""


class MissingImageError(ExporterError):
    """An annotation or proposal references an image file that cannot be read."""


class BackboneFailureError(ExporterError):
    """The vision backbone could not be loaded or failed during inference."""
