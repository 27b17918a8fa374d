"""femkit: automated finite element computing on simplex meshes."""
__version__ = "0.1.0"
