"""Exception types shared across the pipeline."""


class MdsynError(Exception):
    """Base class for all pipeline errors."""


class PointAtInfinity(MdsynError):
    """Projective transform sent a point to (or too close to) infinity."""


class InvalidDepth(MdsynError):
    """Queried depth value is zero / invalid."""


class SizeMismatch(MdsynError):
    """Two images expected to share a shape do not."""


class DegenerateSample(MdsynError):
    """Random sampling failed to produce a usable configuration."""


class DegenerateConfiguration(MdsynError):
    """Point configuration is rank deficient for the requested model."""


class EstimationFailed(MdsynError):
    """Robust estimation found no acceptable model."""


class CheiralityAmbiguous(MdsynError):
    """No pose candidate places a clear majority of points in front of both cameras."""


class EmptyInput(MdsynError):
    """Aggregation requested over zero samples."""


class BorderKeypoint(MdsynError):
    """Keypoint too close to the image border to describe."""


class ParseError(MdsynError):
    """A serialized artifact failed to parse; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class BoundsError(MdsynError):
    """Coordinates fall outside the declared image bounds."""


class MissingModality(MdsynError):
    """Cross-modal pairing requires generated images that are not registered."""

    def __init__(self, missing):
        super().__init__(f"missing generated images: {sorted(missing)}")
        self.missing = sorted(missing)


class GeneratorFailed(MdsynError):
    """External generator exited nonzero or timed out; carries captured output."""

    def __init__(self, message, output=""):
        super().__init__(message)
        self.output = output


class IncompleteOutput(MdsynError):
    """External generator finished but expected output files are absent or unreadable."""


class InsufficientPairs(MdsynError):
    """A test scene holds fewer pairs than the requested subsample size."""


class EmptySubset(MdsynError):
    """Training-pair sampling was given an empty modality subset."""
