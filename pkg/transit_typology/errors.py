from __future__ import annotations


def _restore(cls, message, state):
    error = cls.__new__(cls)
    Exception.__init__(error, message)
    error.__dict__.update(state)
    return error


class TypologyError(Exception):
    exit_code: int = 3

    def __init__(self, message, suggestion=None):
        if suggestion:
            message += f"\n{str(suggestion)}"
        super().__init__(message)

    def __reduce__(self):
        # subclasses take other constructor arguments, so rebuild from state
        return (_restore, (type(self), str(self), self.__dict__))


# gtfs_feed


class FeedError(TypologyError):
    pass


class FeedNotFound(FeedError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(
            f"Feed '{path}' does not exist.",
            suggestion="Point feed_path at a GTFS zip archive or an unpacked feed directory.",
        )


class InvalidHourWindow(FeedError):
    pass


class MissingMandatoryFile(FeedError):
    def __init__(self, filename: str, suggestion=None):
        self.filename = filename
        super().__init__(
            f"Mandatory GTFS file '{filename}' is missing from the feed.", suggestion
        )


class MalformedRow(FeedError):
    def __init__(self, filename: str, line: int, reason: str):
        self.filename = filename
        self.line = line
        self.reason = reason
        super().__init__(f"{filename}, line {line}: {reason}")


class DanglingReference(FeedError):
    def __init__(self, filename: str, column: str, ids: list[str]):
        self.filename = filename
        self.column = column
        self.ids = sorted(ids)
        shown = ", ".join(self.ids[:10])
        more = f" (+{len(self.ids) - 10} more)" if len(self.ids) > 10 else ""
        super().__init__(
            f"{filename}: column '{column}' references unknown ids: {shown}{more}"
        )


class DateOutsideValidity(FeedError):
    pass


class FeedRejected(FeedError):
    def __init__(self, city_tag: str, reasons: list[str]):
        self.city_tag = city_tag
        self.reasons = reasons
        super().__init__(
            f"Feed '{city_tag}' was rejected: {'; '.join(reasons)}",
            suggestion="Use headsign_policy 'fallback_last_stop' to substitute missing headsigns.",
        )


# region_index


class RegionError(TypologyError):
    pass


class InvalidCoordinate(RegionError):
    pass


class InvalidBoundary(RegionError):
    pass


class UnassignedStop(RegionError):
    pass


# normalizer


class NormalizationError(TypologyError):
    pass


class EmptyMatrix(NormalizationError):
    pass


class UnknownCity(NormalizationError):
    pass


class DegenerateBlock(NormalizationError):
    pass


# autoencoder


class ModelError(TypologyError):
    pass


class ShapeMismatch(ModelError):
    pass


class EmptyBatch(ModelError):
    pass


class NonFiniteLoss(ModelError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(
            f"Training diverged in epoch {epoch}: loss or parameters are not finite.",
            suggestion="Lower the learning rate or check the input matrix for values outside [0, 1].",
        )


# clustering


class ClusteringError(TypologyError):
    pass


class LengthMismatch(ClusteringError):
    pass


class ZeroVector(ClusteringError):
    pass


class TooFewPoints(ClusteringError):
    pass


class NonFiniteInput(ClusteringError):
    pass


class InvalidK(ClusteringError):
    pass


# typology_report


class ReportError(TypologyError):
    pass


class EmptyCity(ReportError):
    pass


class UnknownLabel(ReportError):
    pass


class MissingCut(ReportError):
    pass


class GeometryFailure(ReportError):
    pass


# pipeline_cli


class PipelineError(TypologyError):
    pass


class ConfigError(PipelineError):
    exit_code = 2

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__(
            "Invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors)
        )


class MissingStageError(PipelineError):
    def __init__(self, stage: str, requested: str):
        self.stage = stage
        super().__init__(
            f"Stage '{requested}' depends on '{stage}', which has no cached outputs.",
            suggestion=f"Run the '{stage}' stage first or include it in --stages.",
        )


class StageError(PipelineError):
    def __init__(self, stage: str, scope: str, cause: BaseException):
        self.stage = stage
        self.scope = scope
        self.cause = cause
        if isinstance(cause, TypologyError):
            self.exit_code = cause.exit_code
        else:
            self.exit_code = 4
        super().__init__(f"Stage '{stage}' failed for '{scope}': {cause}")
