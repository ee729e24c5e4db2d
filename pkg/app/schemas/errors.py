from typing import Optional

from pydantic import BaseModel


class ErrorDetail(BaseModel):
    code: str
    message: str
    field: Optional[str] = None
    line: Optional[int] = None
    column: Optional[int] = None


class ErrorResponse(BaseModel):
    error: ErrorDetail
