"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Malformed or empty input to a codec or protocol operation."""


class RankDeficient(RuntimeError):
    """Coefficient rows do not span the decode threshold; retriable."""


class InsufficientNodes(ValueError):
    """Fewer nodes available than a placement selection requires."""


class UnknownSigner(KeyError):
    """Node id not registered with the key directory."""


class BadSignature(ValueError):
    """Signature did not verify for the claimed signer and message."""


class MembershipFloor(RuntimeError):
    """Depart rejected: it would drop active membership below the coded replication factor."""


class DuplicateChange(ValueError):
    """The registry already holds this exact membership change."""


class InvalidCluster(ValueError):
    """Cluster size below the decode threshold."""


class RetriesExhausted(RuntimeError):
    """A bounded re-query loop hit its iteration cap; diagnostic, not a protocol outcome."""


class SimulationStuck(RuntimeError):
    """The event queue drained while operations were still pending."""
