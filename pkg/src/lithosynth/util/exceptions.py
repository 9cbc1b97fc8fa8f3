# -*- coding: utf-8 -*-
"""
Exceptions raised across lithosynth.

Every error carries the name of the module that raised it, a short message
and an error code, and can be flattened to a dict with
:meth:`LithosynthError.errpacket` for diagnostics (the CLI prints these).
"""


class LithosynthError(Exception):
    """Base class for lithosynth exceptions.

    Parameters
    ----------
    detail : str, optional
        Context for this particular occurrence (offending value, file, id).
    **context
        Extra key-value context that is added to the error packet.
    """

    module = "lithosynth"
    message = "lithosynth error"
    errcode = 10

    def __init__(self, detail="", **context):
        super().__init__(detail or self.message)
        self.detail = detail
        self.context = context

    def errpacket(self):
        """Returns the error as a dict."""
        packet = {
            "module": self.module,
            "message": self.message,
            "detail": self.detail,
            "errcode": self.errcode,
        }
        packet.update(self.context)
        return packet

    def __str__(self):
        if self.detail:
            return f"[{self.module}] {self.message}: {self.detail}"
        return f"[{self.module}] {self.message}"


# layout


class InvalidSpecError(LithosynthError):
    """A layout spec violates its invariants"""

    module = "layout"
    message = "invalid layout spec"
    errcode = 20


class GenerationFailureError(LithosynthError):
    """Composite generator could not meet its constraints"""

    module = "layout"
    message = "composite layout generation failed"
    errcode = 21


# morphology


class OutOfBoundsTargetError(LithosynthError):
    """Perturbation target lies outside the layout grid"""

    module = "morphology"
    message = "perturbation target outside layout bounds"
    errcode = 30


class NonUnitNormalError(LithosynthError):
    """Normal passed to the support function is not of unit length"""

    module = "morphology"
    message = "normal vector is not a unit vector"
    errcode = 31


# topology


class DimensionMismatchError(LithosynthError):
    """Two rasters that must share a shape do not"""

    module = "topology"
    message = "dimension mismatch"
    errcode = 40


# injection


class SamplingExhaustedError(LithosynthError):
    """The rejection sampler ran out of attempts"""

    module = "injection"
    message = "defect sampling exhausted"
    errcode = 50


# renderer


class WindowEmptyError(LithosynthError):
    """No boundary pixels inside the EPE measurement window"""

    module = "renderer"
    message = "no boundary pixels in measurement window"
    errcode = 60


# annotate


class EmptyAnnotationError(LithosynthError):
    """No difference component survived the area filter"""

    module = "annotate"
    message = "no annotation instance survived"
    errcode = 70


class MalformedRleError(LithosynthError):
    """Run-length encoding is inconsistent with its declared size"""

    module = "annotate"
    message = "malformed run-length encoding"
    errcode = 71


# export


class InsufficientLayoutsError(LithosynthError):
    """Too few base layouts to populate every requested split"""

    module = "export"
    message = "insufficient layouts for requested split"
    errcode = 80


class SchemaViolationError(LithosynthError):
    """A dataset manifest breaks one of its invariants"""

    module = "export"
    message = "dataset manifest schema violation"
    errcode = 81


class DatasetIOError(LithosynthError):
    """Reading or writing a dataset artifact failed"""

    module = "export"
    message = "dataset i/o error"
    errcode = 82


# evaluate


class DegenerateBoxError(LithosynthError):
    """Box with non-positive width or height"""

    module = "evaluate"
    message = "degenerate box"
    errcode = 90


class EmptyMaskError(LithosynthError):
    """Mask without any foreground pixel"""

    module = "evaluate"
    message = "empty mask"
    errcode = 91


class UndefinedApError(LithosynthError):
    """AP requested for a class with no ground-truth instances"""

    module = "evaluate"
    message = "average precision undefined without ground truth"
    errcode = 92


class UnknownImageIdError(LithosynthError):
    """Prediction references an image missing from the ground truth"""

    module = "evaluate"
    message = "unknown image id"
    errcode = 93


class UnknownCategoryError(LithosynthError):
    """Prediction references an unknown category id"""

    module = "evaluate"
    message = "unknown category id"
    errcode = 94


class MalformedJsonError(LithosynthError):
    """Input file is not valid JSON or lacks required fields"""

    module = "evaluate"
    message = "malformed json"
    errcode = 95


# configuration


class InvalidConfigError(LithosynthError):
    """Configuration file or value is invalid"""

    module = "config"
    message = "invalid configuration"
    errcode = 2
