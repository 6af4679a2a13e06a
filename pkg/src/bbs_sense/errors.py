"""Exception types raised by the library."""


class BBSError(Exception):
    """Base class; ``kind`` is the machine-readable tag the CLI prints."""

    kind = "error"


class InvalidConfigError(BBSError, ValueError):
    kind = "invalid-config"


class InvalidProfileError(BBSError, ValueError):
    kind = "invalid-profile"


class DuplicateMemberError(BBSError, ValueError):
    kind = "duplicate-member"


class DomainError(BBSError, ValueError):
    kind = "domain"


class DegenerateLastBidderError(DomainError):
    """The interior bid formula has no content for the last bidder."""

    kind = "degenerate-last-bidder"


class RejectedArrivalError(BBSError, ValueError):
    kind = "rejected-arrival"
