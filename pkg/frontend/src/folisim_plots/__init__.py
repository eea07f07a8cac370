from .plot import EmptyInput, SchemaMismatch, render

__all__ = ["render", "SchemaMismatch", "EmptyInput"]
