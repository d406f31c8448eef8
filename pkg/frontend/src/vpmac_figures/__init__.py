"""Offline figure rendering for vpmac CSV outputs."""

from .render import KINDS, FigureJob, RenderError, infer_kind, render

__all__ = ["KINDS", "FigureJob", "RenderError", "infer_kind", "render"]
