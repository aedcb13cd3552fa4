"""Turn an answerable text-to-SQL corpus into clarification dialogues and score models on them."""

__version__ = "0.1.0"
PIPELINE_VERSION = "practiq-gen-1"
