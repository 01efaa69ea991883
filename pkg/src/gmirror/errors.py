"""Exception hierarchy shared by every Gaussian-mirror routine."""


class GaussianMirrorError(Exception):
    """Base class; ``payload`` is what the CLI serializes on failure."""

    kind = "error"

    def payload(self):
        return {"error": self.kind, "message": str(self)}


class SingularDesignError(GaussianMirrorError):
    kind = "singular_design"

    def __init__(self, message, deficient=1, feature=None):
        super().__init__(message)
        self.deficient = int(deficient)
        self.feature = feature

    def payload(self):
        out = super().payload()
        out["deficient_columns"] = self.deficient
        if self.feature is not None:
            out["feature"] = self.feature
        return out


class ConstantColumnError(GaussianMirrorError):
    kind = "constant_column"

    def __init__(self, column):
        super().__init__(f"design column {column} has zero variance")
        self.column = int(column)

    def payload(self):
        out = super().payload()
        out["column"] = self.column
        return out


class DegeneratePerturbationError(GaussianMirrorError):
    kind = "degenerate_perturbation"

    def __init__(self, message, feature=None):
        super().__init__(message)
        self.feature = feature


class ConvergenceError(GaussianMirrorError):
    kind = "convergence"

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = float(gap)

    def payload(self):
        out = super().payload()
        out["objective_gap"] = self.gap
        return out


class InconsistentEventError(GaussianMirrorError):
    """The fitted responses violate their own selection-event constraints."""

    kind = "inconsistent_event"


class GeometryError(GaussianMirrorError):
    kind = "geometry_inconsistency"


class InvalidIntervalError(GaussianMirrorError, ValueError):
    kind = "invalid_interval"


class InvalidKError(GaussianMirrorError, ValueError):
    kind = "invalid_k"


class SpecError(GaussianMirrorError, ValueError):
    kind = "invalid_spec"


class ParseError(GaussianMirrorError, ValueError):
    kind = "parse"

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = None if path is None else str(path)

    def payload(self):
        out = super().payload()
        if self.line is not None:
            out["line"] = self.line
        if self.path is not None:
            out["path"] = self.path
        return out


class BootstrapError(GaussianMirrorError):
    kind = "bootstrap"


class ReplicateFailureError(GaussianMirrorError):
    kind = "replicate_failure"
