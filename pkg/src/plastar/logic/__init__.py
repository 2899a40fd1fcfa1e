"""PLA* syntax, semantics and aggregation registries."""
