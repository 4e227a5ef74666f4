"""Run configuration: schema, loading and conversion to library objects.

A run is described by one YAML document::

    schema_version: 1
    seed: 20240601
    data:
      experiments: {toy: toy.csv}          # id -> CSV with columns x,y
    model: {name: linear, params: {}}
    prior:                                 # one entry per physical coordinate
      - {dist: normal, mean: 0.0, sd: 10.0}
    loss:
      kind: l2                             # l2 | gaussian_nll
      quadrature: sum                      # sum | trapezoid (l2 only)
      sigma2_prior: null                   # required for gaussian_nll
      subtract_mean_discrepancy: true      # offset residuals by E[delta]
    discrepancy:
      kind: shift-family                   # gp-empirical-bayes | gp-explicit | shift-family | none
      noise_sd: 0.01
      shift: {start: 1.333, stop: 4.0, low: -0.4, high: 0.0}
    tuning:
      method: bootstrap                    # bootstrap | ess | fixed
      variant: prior                       # prior | map | block
      B: 200
      w_grid: {lo: 0.001, hi: 10.0, n: 35} # or an explicit list
      alpha: 0.05
      policy: spline                       # spline | grid
      interval: laplace                    # laplace | mcmc
    sampler: {n_iter: 20000, n_burn: 5000}
    ensemble: {scaling: across, tol: 1.0e-10, max_iter: 500}
    outputs: {directory: out}

Relative paths are resolved against the directory holding the config file.
Unknown keys anywhere are rejected.
"""

import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import GaussianNLL, InverseGamma, L2Loss, Normal, ParameterPrior, Uniform
from .errors import ConfigurationError
from .gp import GPDiscrepancy, NoDiscrepancy, ShiftFamily, SqExpKernel
from .models import build_model
from .pipeline import EMPIRICAL
from .tuning import BootstrapConfig, default_w_grid

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PriorSpec(_Strict):
    dist: Literal["uniform", "normal", "inverse_gamma"]
    lo: Optional[float] = None
    hi: Optional[float] = None
    mean: Optional[float] = None
    sd: Optional[float] = None
    shape: Optional[float] = None
    scale: Optional[float] = None

    @model_validator(mode="after")
    def _fields_match_dist(self):
        need = {"uniform": ("lo", "hi"), "normal": ("mean", "sd"), "inverse_gamma": ("shape", "scale")}[self.dist]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"{self.dist} prior needs {missing}")
        extra = [k for k in ("lo", "hi", "mean", "sd", "shape", "scale") if k not in need and getattr(self, k) is not None]
        if extra:
            raise ValueError(f"{self.dist} prior does not take {extra}")
        return self

    def build(self):
        if self.dist == "uniform":
            return Uniform(self.lo, self.hi)
        if self.dist == "normal":
            return Normal(self.mean, self.sd)
        return InverseGamma(self.shape, self.scale)


class DataSection(_Strict):
    experiments: Dict[str, str]

    @field_validator("experiments")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("at least one experiment is required")
        return v


class ModelSection(_Strict):
    name: str
    params: Dict[str, object] = Field(default_factory=dict)


class LossSection(_Strict):
    kind: Literal["l2", "gaussian_nll"] = "l2"
    quadrature: Literal["sum", "trapezoid"] = "sum"
    sigma2_prior: Optional[PriorSpec] = None
    subtract_mean_discrepancy: bool = False

    @model_validator(mode="after")
    def _sigma2_prior(self):
        if self.kind == "gaussian_nll" and self.sigma2_prior is None:
            raise ValueError("gaussian_nll needs sigma2_prior")
        if self.kind == "l2" and self.sigma2_prior is not None:
            raise ValueError("sigma2_prior only applies to gaussian_nll")
        return self


class KernelSpec(_Strict):
    s2: float = Field(ge=0)
    length_scale: float = Field(gt=0)
    nugget: float = Field(default=0.0, ge=0)


class ShiftSpec(_Strict):
    start: float
    stop: float
    low: float
    high: float


class DiscrepancySection(_Strict):
    kind: Literal["gp-empirical-bayes", "gp-explicit", "shift-family", "none"] = "gp-empirical-bayes"
    noise_sd: float = Field(default=0.0, ge=0)
    kernel: Optional[KernelSpec] = None
    shift: Optional[ShiftSpec] = None

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "gp-explicit" and self.kernel is None:
            raise ValueError("gp-explicit needs kernel")
        if self.kind == "shift-family" and self.shift is None:
            raise ValueError("shift-family needs shift")
        return self


class GridSpec(_Strict):
    lo: float = Field(default=1e-3, gt=0)
    hi: float = Field(default=10.0, gt=0)
    n: int = Field(default=35, ge=2)


class TuningSection(_Strict):
    method: Literal["bootstrap", "ess", "fixed"] = "bootstrap"
    variant: Literal["prior", "map", "block"] = "prior"
    B: int = Field(default=100, ge=20)
    w_grid: Union[GridSpec, List[float]] = Field(default_factory=GridSpec)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    policy: Literal["spline", "grid"] = "spline"
    interval: Literal["laplace", "mcmc"] = "laplace"
    block_length: Optional[float] = Field(default=None, gt=0)
    fixed_w: Optional[float] = Field(default=None, ge=0)
    n_iter: int = Field(default=4000, ge=1)
    n_burn: int = Field(default=1000, ge=0)

    @model_validator(mode="after")
    def _method_fields(self):
        if self.method == "fixed" and self.fixed_w is None:
            raise ValueError("method 'fixed' needs fixed_w")
        if self.variant == "block" and self.block_length is None:
            raise ValueError("variant 'block' needs block_length")
        return self

    def grid(self):
        if isinstance(self.w_grid, GridSpec):
            return default_w_grid(self.w_grid.n, self.w_grid.lo, self.w_grid.hi)
        return tuple(self.w_grid)


class SamplerSection(_Strict):
    n_iter: int = Field(default=20000, ge=200)
    n_burn: int = Field(default=5000, ge=0)

    @model_validator(mode="after")
    def _burn(self):
        if self.n_iter - self.n_burn < 100:
            raise ValueError("n_iter - n_burn must leave at least 100 kept draws")
        return self


class EnsembleSection(_Strict):
    scaling: Literal["within", "across"] = "across"
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=500, ge=1)


class OutputsSection(_Strict):
    directory: str = "out"


class RunConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    seed: int = Field(default=0, ge=0)
    data: DataSection
    model: ModelSection
    prior: List[PriorSpec]
    loss: LossSection = Field(default_factory=LossSection)
    discrepancy: DiscrepancySection = Field(default_factory=DiscrepancySection)
    tuning: TuningSection = Field(default_factory=TuningSection)
    sampler: SamplerSection = Field(default_factory=SamplerSection)
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    outputs: OutputsSection = Field(default_factory=OutputsSection)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return self.model_dump(mode="json")

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    # -- construction of library objects ------------------------------------

    def build_model(self):
        return build_model(self.model.name, self.model.params)

    def build_prior(self):
        marginals = [p.build() for p in self.prior]
        if self.loss.kind == "gaussian_nll":
            marginals.append(self.loss.sigma2_prior.build())
        return ParameterPrior(tuple(marginals))

    def build_discrepancy(self):
        d = self.discrepancy
        if d.kind == "gp-empirical-bayes":
            return EMPIRICAL
        if d.kind == "gp-explicit":
            return GPDiscrepancy(SqExpKernel(d.kernel.s2, d.kernel.length_scale, d.kernel.nugget), d.noise_sd)
        if d.kind == "shift-family":
            s = d.shift
            return ShiftFamily(s.start, s.stop, Uniform(s.low, s.high), d.noise_sd)
        return NoDiscrepancy(d.noise_sd)

    def build_loss(self, x, discrepancy):
        offset = None
        if self.loss.subtract_mean_discrepancy and not isinstance(discrepancy, str):
            offset = discrepancy.mean(x)
            if not np.any(offset):
                offset = None
        if self.loss.kind == "gaussian_nll":
            return GaussianNLL(offset)
        return L2Loss(self.loss.quadrature, offset)

    def bootstrap_config(self, n_jobs=1):
        t = self.tuning
        return BootstrapConfig(
            B=t.B, w_grid=t.grid(), alpha=t.alpha, variant=t.variant, block_length=t.block_length,
            seed=self.seed, interval=t.interval, n_iter=t.n_iter, n_burn=t.n_burn, n_jobs=n_jobs,
        )


def _format_error(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def parse_config(doc):
    """Validate a mapping; raises ConfigurationError naming the offending keys."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a mapping")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigurationError(_format_error(exc)) from None
    if len(cfg.prior) == 0:
        raise ConfigurationError("prior: at least one coordinate is required")
    if not math.isfinite(cfg.tuning.alpha):
        raise ConfigurationError("tuning.alpha: must be finite")
    return cfg


def load_config(path):
    """Read and validate a YAML config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from None
    return parse_config(doc)
