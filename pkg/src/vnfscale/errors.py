"""Exception types shared across the package."""


class VnfScaleError(Exception):
    """Base class for all vnfscale errors."""


class TopologyError(VnfScaleError):
    """A topology invariant is violated."""


class Disconnected(TopologyError):
    pass


class SelfLoop(TopologyError):
    pass


class DuplicateLink(TopologyError):
    pass


class NoDeployableNode(TopologyError):
    pass


class UnknownNode(VnfScaleError):
    """A node id referenced by a link or request does not exist."""


class ShapeMismatch(VnfScaleError):
    """Two operands have incompatible shapes (both are named in the message)."""


class EmptyRequestSet(VnfScaleError):
    pass


class UnroutableReference(VnfScaleError):
    """The reference deployment cannot route a request it is supposed to serve."""


class ExactModeTooLarge(VnfScaleError):
    """Exact solver requested on an instance above the enumeration bound."""


class NonScalarLoss(VnfScaleError):
    pass


class TableMismatch(VnfScaleError):
    """Node-embedding table size disagrees with the topology."""


class OddDim(VnfScaleError):
    pass


class EmptyBuffer(VnfScaleError):
    pass


class PhaseMisalignment(VnfScaleError):
    """Auxiliary-phase interval does not land on a policy-phase boundary."""


class VersionMismatch(VnfScaleError):
    pass


class CorruptCheckpoint(VnfScaleError):
    pass


class UnknownEntry(VnfScaleError):
    pass


class FormatError(VnfScaleError):
    """A persisted document has missing, unknown, or malformed fields."""
