# igsf/schemas.py
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

FilterKind = Literal["igsf-bank", "igsf-adp", "igsf", "enkf", "sir", "asir", "gspf", "kalman"]
ScheduleKind = Literal["exp-decay", "constant-then-zero", "none"]

# filters that run the bank code path (and share its random streams)
IGSF_KINDS = ("igsf-bank", "igsf-adp", "igsf")
MIXTURE_KINDS = IGSF_KINDS + ("gspf",)

U64_MAX = (1 << 64) - 1


class FilterConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    label: str
    kind: FilterKind
    n_particles: int = Field(1000, ge=2)
    n_mixands: int = Field(1, ge=1)
    iterations: int = Field(0, ge=0)
    alpha1: float = Field(1.0, ge=0)
    schedule: ScheduleKind = "exp-decay"
    epsilon: Union[Literal["auto", "strict"], float] = "auto"
    init_spread: float = Field(0.0, ge=0)
    prediction_term: Literal["particle", "mean"] = "particle"

    @field_validator("epsilon")
    @classmethod
    def epsilon_nonnegative(cls, v):
        if isinstance(v, float) and v < 0:
            raise ValueError("epsilon must be >= 0")
        return v

    @model_validator(mode="after")
    def check_ensemble(self):
        if self.kind in ("igsf-adp", "igsf") and self.n_mixands != 1:
            raise ValueError(f"{self.kind} runs a single mixand (n_mixands = 1)")
        if self.kind == "igsf" and self.schedule != "none":
            raise ValueError("igsf runs without ADP (schedule = none)")
        if self.n_particles % self.n_mixands:
            raise ValueError("N divisible by N_G is required (n_particles % n_mixands == 0)")
        if self.kind in MIXTURE_KINDS and self.n_particles // self.n_mixands < 2:
            raise ValueError("each mixand needs at least 2 particles")
        return self

    @property
    def gamma(self) -> int:
        return self.n_particles // self.n_mixands


class Config(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["growth", "tracking", "frame5", "frame20", "linear"]
    params: Dict[str, Any] = Field(default_factory=dict)
    filters: List[FilterConfig] = Field(min_length=1)
    runs: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, le=U64_MAX)
    out_dir: str = "results"
    workers: int = Field(1, ge=1)
    jitter: float = Field(1e-12, gt=0)

    @model_validator(mode="after")
    def check_filters(self):
        labels = [f.label for f in self.filters]
        if len(set(labels)) != len(labels):
            raise ValueError(f"filter labels must be unique, got {labels}")
        if self.experiment != "linear" and any(f.kind == "kalman" for f in self.filters):
            raise ValueError("the kalman filter needs the linear experiment")
        return self

    def filter(self, label: str) -> FilterConfig:
        for f in self.filters:
            if f.label == label:
                return f
        raise KeyError(label)


class MetaDocument(BaseModel):
    """Contents of meta.json next to each filter's CSV files."""

    experiment: str
    filter: FilterConfig
    config: Dict[str, Any]
    seed: int
    runs: int
    run_stream_ids: List[Dict[str, Any]]
    schedule_values: List[float]
    component_names: List[str]
    rmse_components: List[str]
    steps: int
    elapsed_seconds: Optional[float] = None
