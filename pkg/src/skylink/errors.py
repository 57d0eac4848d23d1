"""Exception hierarchy shared by every skylink subsystem."""


class SkylinkError(Exception):
    """Base class for all errors raised by this package."""


# crypto layer
class InvalidCiphertext(SkylinkError):
    """EAX verification failed; no plaintext is released."""


class MalformedPublicKey(SkylinkError):
    pass


class MalformedCiphertext(SkylinkError):
    pass


# channel layer
class ChannelError(SkylinkError):
    pass


class SchemeRejected(ChannelError):
    pass


class HandshakeTampered(ChannelError):
    pass


class MalformedHello(ChannelError):
    pass


class MalformedFrame(ChannelError):
    pass


class ReplayDetected(ChannelError):
    pass


class AuthenticationFailed(ChannelError):
    pass


class SessionClosed(ChannelError):
    pass


class CounterExhausted(ChannelError):
    pass


class HandshakeTimeout(ChannelError):
    pass


# station layer
class StationError(SkylinkError):
    pass


class BindFailure(StationError):
    pass


class ConnectFailure(StationError):
    pass


class TransferRejected(StationError):
    pass


# data / learning layer
class UnknownExperiment(SkylinkError, ValueError):
    pass


class EmptyLog(SkylinkError):
    pass


class EmptyDataset(SkylinkError, ValueError):
    pass


class SingleClassTraining(SkylinkError, ValueError):
    pass


class SingleClassEval(SkylinkError, ValueError):
    pass


class NonFiniteLoss(SkylinkError, ArithmeticError):
    pass


class WidthMismatch(SkylinkError, ValueError):
    pass


class NonceReuse(ChannelError):
    """A seal was attempted with a counter that was already used."""
