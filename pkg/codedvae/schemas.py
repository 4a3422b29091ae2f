from pydantic import BaseModel, ConfigDict


class Base(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TensorRecord(BaseModel):
    """Immutable record holding tensors; fields are validated by type only."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
