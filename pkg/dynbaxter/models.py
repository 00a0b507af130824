"""Pydantic models for model parameters, suite configuration, reports and JSON schemas."""

import re
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config
from .exceptions import DomainError


_COMPLEX_I = re.compile(r"(?<=[0-9.])i$")


def parse_complex(value: Any) -> complex:
    """Accept numbers, [re, im] pairs and strings such as "0.3+0.1i" or "1.2j"."""
    if isinstance(value, complex):
        return value
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        text = value.strip().replace(" ", "")
        text = _COMPLEX_I.sub("j", text)
        if text.endswith("i"):
            text = text[:-1] + "j"
        try:
            return complex(text)
        except ValueError as e:
            raise DomainError(f"cannot parse complex number {value!r}") from e
    raise DomainError(f"cannot parse complex number {value!r}")


class ModelVariant(str, Enum):
    EIGHT_VERTEX = "8v"
    SOS = "sos"
    SYM_SOS = "sym-sos"
    ELLIPTIC_A = "ell-a"
    TRIG_A = "trig-a"


class TransferKind(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    TRIANGLE = "triangle"


class SystemFlavor(str, Enum):
    UNIQUE = "unique"
    QUASI_UNIQUE = "quasi-unique"
    GENERAL = "general"


class EllipticParams(BaseModel):
    """Nome p, half-period scale K, crossing parameter lambda and normalization zeta."""

    model_config = ConfigDict(frozen=True)

    p: complex = config.NOME
    K: float = config.HALF_PERIOD
    lam: complex = config.CROSSING
    zeta: Optional[complex] = None

    @field_validator("p", "lam", "zeta", mode="before")
    @classmethod
    def _complex(cls, value):
        return None if value is None else parse_complex(value)

    @model_validator(mode="after")
    def _check(self):
        if abs(self.p) >= 1:
            raise DomainError(f"nome must satisfy |p| < 1, got {self.p}")
        if self.K <= 0:
            raise DomainError(f"half period K must be positive, got {self.K}")
        if self.zeta is None:
            from .elliptic import normalization_zeta

            object.__setattr__(self, "zeta", normalization_zeta(self.p))
        return self


class ThetaParams(BaseModel):
    """Modular parameter tau and level L of the normalized bracket."""

    model_config = ConfigDict(frozen=True)

    tau: complex = config.TAU
    L: int = config.LEVEL

    @field_validator("tau", mode="before")
    @classmethod
    def _complex(cls, value):
        return parse_complex(value)

    @model_validator(mode="after")
    def _check(self):
        if self.tau.imag <= 0:
            raise DomainError(f"tau must lie in the upper half plane, got {self.tau}")
        # L >= 2 keeps 1/(2L-2) off the lattice Z + tau Z
        if self.L < 2:
            raise DomainError(f"level L must be at least 2, got {self.L}")
        return self

    @property
    def scale(self) -> int:
        return 2 * self.L - 2


class ModelParams(BaseModel):
    """Everything needed to build one of the spectral operator families."""

    variant: ModelVariant
    elliptic: EllipticParams = Field(default_factory=EllipticParams)
    theta: ThetaParams = Field(default_factory=ThetaParams)
    xi: float = config.SOS_SHIFT
    s_plus: float = config.S_PLUS
    s_minus: Optional[float] = None
    window: int = config.WINDOW
    center: int = 0
    restricted: bool = False
    shift: float = config.SHIFT
    g: Optional[int] = None

    @model_validator(mode="after")
    def _fill(self):
        if self.s_minus is None:
            # xi = (s+ + s-)/2 - K/lambda
            lam = self.elliptic.lam.real
            self.s_minus = 2 * (self.xi + self.elliptic.K / lam) - self.s_plus
        if self.window < 1:
            raise DomainError("window radius must be at least 1")
        return self

    @property
    def scale(self) -> int:
        return self.g if self.g is not None else self.theta.scale


class SuiteConfig(BaseModel):
    suite: str
    model: Optional[ModelVariant] = None
    pair: Optional[str] = None
    cells: Optional[str] = None
    params: Optional[ModelParams] = None
    tolerance: float = config.TOLERANCE
    samples: int = config.SAMPLES
    seed: int = config.SEED
    out: Optional[str] = None
    input_path: Optional[str] = None

    @field_validator("tolerance")
    @classmethod
    def _positive_tol(cls, value):
        if value <= 0:
            raise DomainError("tolerance must be positive")
        return value

    @field_validator("samples")
    @classmethod
    def _positive_samples(cls, value):
        if value < 1:
            raise DomainError("sample count must be at least 1")
        return value


class CheckResult(BaseModel):
    name: str
    residual: float
    tol: float
    passed: bool = Field(default=False, serialization_alias="pass")
    detail: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _judge(self):
        self.passed = bool(self.residual < self.tol)
        return self


class ResidualReport(BaseModel):
    suite: str
    checks: List[CheckResult] = []
    passed: bool = Field(default=False, serialization_alias="pass")
    samples: int = 0
    resamples: int = 0
    wall_time: Optional[float] = None

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        self.passed = all(c.passed for c in self.checks)
        return check

    def to_json_dict(self, include_timing: bool = False) -> Dict[str, Any]:
        data = self.model_dump(by_alias=True, exclude={"wall_time"})
        if include_timing:
            data["wall_time"] = self.wall_time
        return data


# JSON schemas


class ArrowSchema(BaseModel):
    id: str
    src: str
    tgt: str
    inv: str


class GroupoidSchema(BaseModel):
    objects: List[str]
    arrows: List[ArrowSchema]
    positions: Dict[str, float] = {}


class ConnectingSetSchema(BaseModel):
    src_groupoid: GroupoidSchema
    tgt_groupoid: GroupoidSchema
    arrows: List[Tuple[str, str, str]]


class BlockSchema(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    inp: List[str] = Field(alias="in")
    out: List[str]
    mat: List[List[Tuple[float, float]]]


class BlockOperatorSchema(BaseModel):
    domain: List[str]
    codomain: List[str]
    blocks: List[BlockSchema]


class CellSchema(BaseModel):
    a1: str
    a2: str
    e1: str
    e2: str
    value: Tuple[float, float]
    flagged: bool = False


class CellDataSchema(BaseModel):
    """Cell values laid over a named skeleton: "ad" (with level) or "e6"."""

    family: Optional[str] = None
    level: Optional[int] = None
    cells: List[CellSchema]


class TwistPairSchema(BaseModel):
    """A dynamical twist pair on a one-leg graded space: J on two legs, Q on three."""

    groupoid: GroupoidSchema
    J: BlockOperatorSchema
    Q: BlockOperatorSchema
    R: Optional[BlockOperatorSchema] = None
