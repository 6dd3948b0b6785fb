"""Offline transformer embedding exporter for capsnews XSEQ stores."""

from .export import ExportError, ExportJob, VerifyReport, export, read_manifest, verify

__all__ = ["ExportError", "ExportJob", "VerifyReport", "export", "read_manifest", "verify"]
