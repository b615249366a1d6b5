"""Embedding extraction for the qualification engine interchange format."""

__version__ = "0.1.0"

from .extract import ExtractionJob, ImageInput, PromptInput, extract, extract_criteria, load_manifest
from .backends import load_backend

__all__ = ["ExtractionJob", "ImageInput", "PromptInput", "extract", "extract_criteria", "load_manifest", "load_backend"]
