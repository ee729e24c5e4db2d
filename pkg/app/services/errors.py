from typing import Any, Dict, Optional


class SepStabError(Exception):
    """Base exception for construction, verification and configuration failures."""

    default_code = "sepstab_error"

    def __init__(
        self,
        *,
        message: str,
        code: Optional[str] = None,
        field: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code or self.default_code
        self.field = field
        self.line = line
        self.column = column

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "code": self.code,
            "message": self.message,
        }
        if self.field is not None:
            payload["field"] = self.field
        if self.line is not None:
            payload["line"] = self.line
        if self.column is not None:
            payload["column"] = self.column
        return payload


class NonUnitNormError(SepStabError):
    default_code = "non_unit_norm"


class NotHermitianError(SepStabError):
    default_code = "not_hermitian"


class DimensionMismatchError(SepStabError):
    default_code = "dimension_mismatch"


class NotUnbiasedBasisError(SepStabError):
    default_code = "not_unbiased_basis"


class DimensionCapError(SepStabError):
    default_code = "dimension_cap"


class InvalidOrderError(SepStabError):
    default_code = "invalid_order"


class InvalidParametersError(SepStabError):
    default_code = "invalid_parameters"


class InvalidStateError(SepStabError):
    default_code = "invalid_state"


class NotCPTPError(SepStabError):
    default_code = "not_cptp"


class UnsupportedDimensionError(SepStabError):
    default_code = "unsupported_dimension"


class ConfigParseError(SepStabError):
    default_code = "parse_error"


class ConfigValidationError(SepStabError):
    default_code = "validation_error"


class BoundViolationError(SepStabError):
    """An exact certificate exceeded the exact fidelity it is supposed to bound."""

    default_code = "bound_violation"
