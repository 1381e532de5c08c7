"""Exception types shared across the transport."""


class TransportError(Exception):
    """Base class for all simshm errors."""


class LayoutError(TransportError):
    """Frame kind or dimensions cannot produce a valid region layout."""


class LayoutMismatchError(TransportError):
    """An existing region under this name has a different kind or capacity."""


class RegionNotFoundError(TransportError):
    """No region exists under the requested name."""


class CorruptionError(TransportError):
    """Region control block failed its magic/consistency check."""


class CapacityError(TransportError):
    """Frame exceeds the capacity this region was provisioned for."""


class ExclusivityError(TransportError):
    """A live writer already owns this region."""


class IntegrityError(TransportError):
    """Per-buffer checksum did not match the copied payload."""


class ConfigError(TransportError):
    """Invalid benchmark or endpoint configuration."""
