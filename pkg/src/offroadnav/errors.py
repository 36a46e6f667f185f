"""Exception types raised across the navigation pipeline."""


class NavError(Exception):
    """Base class for all package errors."""


# instruction parsing / compilation
class EmptyInstruction(NavError, ValueError):
    pass


class NoTerrainLines(NavError, ValueError):
    pass


class MalformedTerrainLine(NavError, ValueError):
    pass


class UnknownAdverb(NavError, KeyError):
    def __str__(self):
        return f"unknown adverb {self.args[0]!r}" if self.args else "unknown adverb"


class TriggerCountMismatch(NavError, ValueError):
    pass


class UnknownTerrain(NavError, ValueError):
    pass


class UnknownLandmark(NavError, ValueError):
    pass


class RedundantLeg(NavError, ValueError):
    """Two consecutive legs would share terrain and speed."""


# LLM transport
class LlmError(NavError):
    pass


class Timeout(LlmError):
    pass


class TransportError(LlmError):
    pass


class NonSuccessStatus(LlmError):
    def __init__(self, status, body=""):
        super().__init__(f"HTTP {status}")
        self.status = status
        self.body = body


# perception
class BadKernelSchedule(NavError, ValueError):
    pass


class DimensionMismatch(NavError, ValueError):
    pass


class EmptyCorpus(NavError, ValueError):
    pass


class UnknownLabel(NavError, KeyError):
    pass


class NoTraversableRegion(NavError):
    pass


class FormatError(NavError, ValueError):
    """Malformed SMAP container."""


# projection
class AboveHorizon(NavError, ValueError):
    pass


class BehindCamera(NavError, ValueError):
    pass


# estimation
class Diverged(NavError, RuntimeError):
    pass


# scenario / harness
class ScenarioInvalid(NavError, ValueError):
    pass


class UsageError(NavError):
    pass
