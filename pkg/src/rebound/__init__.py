"""Resource-annotated refinement types: checking, bound verification,
cost-semantics evaluation, and type-directed program synthesis."""

__version__ = "0.1.0"
