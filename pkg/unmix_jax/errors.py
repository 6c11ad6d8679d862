"""Exceptions raised by unmix_jax.

Every error carries the values needed to diagnose it as attributes, and an
`exit_code` used by the command line interface.
"""


class UnmixError(ValueError):
    exit_code = 1


class ConfigError(UnmixError):
    exit_code = 2


class DimensionMismatch(UnmixError):
    exit_code = 3

    def __init__(self, expected, actual, what="spectral bands"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} mismatch: expected {expected}, got {actual}")


class ShapeMismatch(UnmixError):
    exit_code = 3

    def __init__(self, expected, actual):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"shape mismatch: expected {self.expected}, got {self.actual}")


class RankDeficient(UnmixError):
    exit_code = 4

    def __init__(self, pivot, threshold):
        self.pivot = pivot
        self.threshold = threshold
        super().__init__(
            f"endmember matrix is rank deficient: Cholesky pivot {pivot:.3e} <= threshold {threshold:.3e}")


class DegenerateProblem(UnmixError):
    exit_code = 4

    def __init__(self, num_endmembers):
        self.num_endmembers = num_endmembers
        super().__init__(f"no subspace transform for {num_endmembers} endmember(s); the feasible set is a point")


class IndexOutOfRange(UnmixError):
    exit_code = 12

    def __init__(self, index, size):
        self.index = index
        self.size = size
        super().__init__(f"half-space index {index} outside [0, {size})")


class NonFinite(UnmixError):
    exit_code = 8

    def __init__(self, sweep):
        self.sweep = sweep
        super().__init__(f"non-finite iterate at sweep {sweep}")


class TooManyEndmembers(UnmixError):
    exit_code = 6

    def __init__(self, num_endmembers, limit):
        self.num_endmembers = num_endmembers
        self.limit = limit
        super().__init__(f"active-set oracle supports at most {limit} endmembers, got {num_endmembers}")


class NoKKTPoint(UnmixError):
    exit_code = 7

    def __init__(self, pixels):
        self.pixels = list(pixels)
        super().__init__(f"no KKT point found for {len(self.pixels)} pixel(s), first: {self.pixels[:5]}")


class InsufficientCandidates(UnmixError):
    exit_code = 5

    def __init__(self, found, requested, min_angle_deg):
        self.found = found
        self.requested = requested
        self.min_angle_deg = min_angle_deg
        super().__init__(
            f"only {found} of {requested} endmembers found with pairwise angles > {min_angle_deg} deg")


class ZeroReference(UnmixError):
    exit_code = 11

    def __init__(self):
        super().__init__("reference matrix has zero Frobenius norm")


class FileFormatError(UnmixError):
    exit_code = 9


class BadMagic(FileFormatError):

    def __init__(self, path, found, expected):
        self.path = str(path)
        self.found = found
        self.expected = expected
        super().__init__(f"{path}: bad magic {found!r}, expected {expected!r}")


class TruncatedFile(FileFormatError):

    def __init__(self, path, expected_bytes, actual_bytes):
        self.path = str(path)
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(f"{path}: expected {expected_bytes} bytes, found {actual_bytes}")


class VersionUnsupported(FileFormatError):

    def __init__(self, path, version):
        self.path = str(path)
        self.version = version
        super().__init__(f"{path}: unsupported format version {version}")


class ParseError(FileFormatError):

    def __init__(self, path, line, col, value):
        self.path = str(path)
        self.line = line
        self.col = col
        self.value = value
        super().__init__(f"{path}:{line}:{col}: cannot parse {value!r} as a number")


class EmptyFile(FileFormatError):

    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"{path}: no data")


class IoError(UnmixError):
    exit_code = 10

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class InvalidMatrix(UnmixError):
    exit_code = 3

    def __init__(self, name, reason):
        self.name = name
        self.reason = reason
        super().__init__(f"invalid {name}: {reason}")
