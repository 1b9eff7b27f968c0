"""Feature/transcript export helper for the sepqe toolkit.

Interoperates with the primary package through its file contracts: WAV
triplets in, RFQF feature files, hypothesis transcripts, and JSONL
manifest patches out.
"""

from .backends import LocalConvEncoder, make_encoder
from .export import ExportJob, export_features, export_transcripts
from .rfqf import write_rfqf

__version__ = "0.1.0"

__all__ = ["LocalConvEncoder", "make_encoder", "ExportJob", "export_features",
           "export_transcripts", "write_rfqf", "__version__"]
