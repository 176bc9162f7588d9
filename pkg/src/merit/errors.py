"""Exception hierarchy. Every error carries a stable ``code`` string."""


class MeritError(Exception):
    code = "MERIT_ERROR"


class OutOfRange(MeritError, IndexError):
    code = "OUT_OF_RANGE"


class TensorFormatError(MeritError, ValueError):
    code = "BAD_FORMAT"


class BadMagic(TensorFormatError):
    code = "BAD_MAGIC"


class TruncatedPayload(TensorFormatError):
    code = "TRUNCATED_PAYLOAD"


class UnknownDtype(TensorFormatError):
    code = "UNKNOWN_DTYPE"


class NegativeStride(MeritError, ValueError):
    code = "NEGATIVE_STRIDE"


class UndefinedFootprint(MeritError, ValueError):
    code = "UNDEFINED_FOOTPRINT"


class LutRange(MeritError, ValueError):
    code = "LUT_RANGE"


class DivByZero(MeritError, ZeroDivisionError):
    code = "DIV_BY_ZERO"


class IllegalInstruction(MeritError, ValueError):
    code = "ILLEGAL_INSTRUCTION"


class ScratchpadOverflow(MeritError):
    code = "SCRATCHPAD_OVERFLOW"


class OutOfFootprint(MeritError, IndexError):
    code = "OUT_OF_FOOTPRINT"


class Indivisible(MeritError, ValueError):
    code = "INDIVISIBLE"


class UnknownTemplate(MeritError, KeyError):
    code = "UNKNOWN_TEMPLATE"


class BadParams(MeritError, ValueError):
    code = "BAD_PARAMS"
