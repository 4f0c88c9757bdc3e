"""Device-to-array co-optimization toolkit for NOR-type IGZO FeFET memories."""

__version__ = "0.1.0"
