"""Exception types shared across the package."""


class SigLangError(Exception):
    """Base class for every error this package raises on purpose."""


class TopologyMismatch(SigLangError):
    """Skeleton topologies (joint count, names or tree) do not agree."""


class BvhSyntaxError(SigLangError):
    """Malformed BVH text; carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ChannelMismatch(SigLangError):
    """A BVH data row does not match the declared channel count."""


class EmptyMotion(SigLangError):
    """A motion sequence has no frames, or too few for the operation."""


class EmptyCorpus(SigLangError):
    """A reference corpus directory contains no usable motion files."""


class UnknownVocab(SigLangError):
    """The requested vocabulary label is not in the reference database."""


class DimensionMismatch(SigLangError):
    """Vector dimensions disagree (descriptor vs. basis, embedding vs. centroids)."""


class EmptyModel(SigLangError):
    """A cluster model with no centroids."""


class BandInfeasible(SigLangError):
    """The warp band is too narrow to connect the two sequence ends."""


class VersionMismatch(SigLangError):
    """A serialized file declares an unsupported format version."""


class CorruptFile(SigLangError):
    """A serialized file is truncated or fails its checksum."""


class DegenerateInput(SigLangError):
    """A statistic is undefined for this input (zero variance, too short)."""


class EmptyInput(SigLangError):
    """An operation that needs at least one element received none."""
