"""Exception hierarchy shared across the package."""


class StentShapeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(StentShapeError):
    """Array arguments have incompatible shapes."""


class DimensionMismatch(ShapeMismatch):
    """Node-feature row count does not match the graph node count."""


class ZeroDegreeNode(StentShapeError):
    """Adjacency matrix has an isolated node; normalization is undefined."""


class DegenerateFrame(StentShapeError):
    """Local-frame basis vectors are collinear; the frame is ambiguous."""


class CoincidentMarkers(StentShapeError):
    """A marker coincides with the centroid; no frame axis can be built."""


class DegenerateConfiguration(StentShapeError):
    """Point sets too degenerate for a unique rigid alignment."""


class PointOnPrincipalPlane(StentShapeError):
    """A 3D point projects with a near-zero homogeneous denominator."""


class DegenerateReference(StentShapeError):
    """PnP reference markers are coplanar or collinear."""


class NoConvergence(StentShapeError):
    """Iterative solver stopped without meeting its convergence criterion."""


class ResolutionOverflow(StentShapeError):
    """Requested mesh resolution exceeds the vertex-count cap."""


class EmptyMesh(StentShapeError):
    """Operation requires a mesh with at least one face."""


class EmptyDataset(StentShapeError):
    """Training requires a non-empty dataset."""


class NonFiniteLoss(StentShapeError):
    """Training loss became NaN/inf; carries the epoch where it happened."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class CoplanarPlacement(StentShapeError):
    """Simulated marker placements are coplanar; unusable as PnP reference."""


class InsufficientFamilies(StentShapeError):
    """Cross-validation needs at least three distinct graft families."""


class ParseError(StentShapeError):
    """A data file is malformed; message carries position and expectation."""


class SchemaVersionMismatch(StentShapeError):
    """A data file declares an unsupported format version."""
