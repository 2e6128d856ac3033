from .figures import FigureSpec, KINDS, build_figure, render
from .schema import SchemaError

__all__ = ["FigureSpec", "KINDS", "build_figure", "render", "SchemaError"]
