"""Exception types shared across the toolkit."""


class GreenGuardError(Exception):
    """Base class for every error raised by this package."""


# datasets
class MissingColumn(GreenGuardError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing column {self.name!r}"


class NonNumericCell(GreenGuardError, ValueError):
    def __init__(self, row, col, value=None):
        super().__init__(row, col)
        self.row, self.col, self.value = row, col, value

    def __str__(self):
        return f"non-numeric value {self.value!r} at row {self.row}, column {self.col!r}"


class EmptyFile(GreenGuardError, ValueError):
    pass


class EmptyAfterFilter(GreenGuardError, ValueError):
    pass


class DimensionMismatch(GreenGuardError, ValueError):
    pass


class ClassTooSmall(GreenGuardError, ValueError):
    pass


# binary formats (pcap, model file, wire frames)
class BadMagic(GreenGuardError, ValueError):
    pass


class TruncatedPacket(GreenGuardError, ValueError):
    def __init__(self, index):
        super().__init__(index)
        self.index = index

    def __str__(self):
        return f"capture truncated inside packet record {self.index}"


class UnsupportedLinkType(GreenGuardError, ValueError):
    pass


class EmptyFlow(GreenGuardError, ValueError):
    pass


# autoencoder
class EmptyTrainingSet(GreenGuardError, ValueError):
    pass


class DivergedLoss(GreenGuardError, ArithmeticError):
    pass


class EmptySpace(GreenGuardError, ValueError):
    pass


class VersionMismatch(GreenGuardError, ValueError):
    pass


class CorruptModel(GreenGuardError, ValueError):
    pass


# detector
class EmptyValidationSet(GreenGuardError, ValueError):
    pass


class EmptyTestSet(GreenGuardError, ValueError):
    pass


# wire protocol / agents
class ProtocolError(GreenGuardError):
    """A peer sent bytes that violate the frame layout; fatal for that connection."""


class BadFrameMagic(ProtocolError, BadMagic):
    pass


class UnknownVersion(ProtocolError):
    pass


class UnknownMsgType(ProtocolError):
    pass


class LengthOverflow(ProtocolError):
    pass


class MalformedPayload(ProtocolError):
    pass


class HubUnreachable(GreenGuardError, ConnectionError):
    pass


class CaptureError(GreenGuardError, OSError):
    pass


class BindFailure(GreenGuardError, OSError):
    pass


class ModelSchemaMismatch(GreenGuardError, ValueError):
    pass


# greenmetrics
class NegativeDuration(GreenGuardError, ValueError):
    pass
