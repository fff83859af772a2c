"""Shape instantiation of partially-deployed stent segments from a single
2D marker view: spectral-GCN marker-reference prediction plus a rigid
geometry stack (local frames, Procrustes, PnP, parametric meshes)."""

from . import dataset, errors, gcn, geometry, graph, mesh

__all__ = ["dataset", "errors", "gcn", "geometry", "graph", "mesh"]
__version__ = "0.1.0"
