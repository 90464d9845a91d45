from .render import KINDS, FigureSpec, SchemaError, read_scan_csv, render

__version__ = "0.1.0"
