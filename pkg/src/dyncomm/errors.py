"""Exception types shared across the toolkit."""


class GraphInputError(ValueError):
    """Invalid edge events or graph parameters at construction time."""


class ParseError(ValueError):
    """Malformed input file (TSV events, CSV, config, result JSON)."""


class NumericsError(ArithmeticError):
    """Optimization state became non-finite or a denominator collapsed."""
