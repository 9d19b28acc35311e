"""Bridge from a pretrained image/text encoder to FEAT feature files."""

from .encoders import ClipEncoder, HashEncoder, make_encoder
from .export import ExportManifest, ExportSummary, export_embeddings, read_captions
from .featfile import read_feat, write_feat

__version__ = "0.1.0"
