"""ckt: mine source code, history, and traces into a queryable knowledge graph."""

__version__ = "0.1.0"
