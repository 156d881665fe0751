"""treedistill: tree-kernel weak supervision for question-pair similarity."""

__version__ = "0.1.0"
