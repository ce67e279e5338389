"""Offline region-feature exporter producing CDFE embedding files."""
from .backbone import StubBackbone, TorchvisionBackbone, make_backbone
from .crops import crop_region, load_image
from .errors import BackboneFailureError, ExporterError, MissingImageError
from .export import export_proposals, export_support, write_cdfe
from .manifest import ExportManifest

__version__ = "0.1.0"
