"""Whitney decompositions, tree coverings and weighted inequality checks on planar John domains."""

__version__ = "0.1.0"

from .geometry import PolygonalDomain, make_domain  # noqa: F401
