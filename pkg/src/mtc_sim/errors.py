"""Exception vocabulary shared across the simulator modules.

Every error raised by the package derives from MtcSimError so callers can
catch one base class at the CLI boundary.  The subclasses are deliberately
thin; context goes into the message.
"""


class MtcSimError(Exception):
    """Base class for all simulator errors."""


# -- memory_core ------------------------------------------------------------

class MalformedMemory(MtcSimError):
    """A digital memory record violates a structural invariant."""


class MissingIndexKey(MtcSimError):
    """A selected memory lacks the thread's indexing key."""


class WrongEntity(MtcSimError):
    """Memory does not reference the thread's selection entity."""


# -- overlay_mtc ------------------------------------------------------------

class NoResponders(MtcSimError):
    """VMT formation found no peer holding matching memories."""


class BroadcastBudgetExceeded(MtcSimError):
    """Formation broadcast used more messages than the configured cap."""


class NotAMember(MtcSimError):
    """Peer is not a member of the referenced thread."""


class NoMatchingMemory(MtcSimError):
    """Joining peer holds no memory matching the thread criteria."""


class TooFew(MtcSimError):
    """Sub-community needs at least two members."""


class EmptySubCommunity(MtcSimError):
    """No member left to promote."""


# -- baseline_topologies ----------------------------------------------------

class InvalidExponent(MtcSimError):
    """Power-law exponent must be greater than two."""


class InsufficientPeers(MtcSimError):
    """Fewer peers than communities."""


class EmptyDataset(MtcSimError):
    """MTC generation needs a dataset with at least one memory."""


class TooSmall(MtcSimError):
    """Graph density is undefined below two vertices."""


# -- sim_engine -------------------------------------------------------------

class InvalidParams(MtcSimError):
    """Query-schedule parameters out of range (e.g. b <= m)."""


class UnknownPeer(MtcSimError):
    """Referenced peer id does not exist in the topology."""


class ConfigInvalid(MtcSimError):
    """Simulation configuration failed validation."""


# -- metrics ----------------------------------------------------------------

class NoQueries(MtcSimError):
    """Success rate undefined for a run that issued no queries."""


class MixedPoints(MtcSimError):
    """Aggregation requires runs from a single sweep point."""


class TooFewPoints(MtcSimError):
    """Stability SD needs at least two sweep points."""


# -- cli_io -----------------------------------------------------------------

class ParseError(MtcSimError):
    """Unreadable config or data file; message carries line context."""


class ValidationError(MtcSimError):
    """Config value out of range; message names the field."""


class InvalidFraction(MtcSimError):
    """Dataset fraction parameters must lie in [0, 1]."""


class IoError(MtcSimError):
    """File could not be written or read."""
