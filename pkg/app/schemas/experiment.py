from __future__ import annotations

import math
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic.alias_generators import to_camel

CONFIG_SCHEMA_VERSION = 1

Mode = Literal["construct", "verify", "certify", "channel-bound"]
Generator = Literal["bell", "ghz", "w", "maximally-entangled", "random"]
NoiseName = Literal["depolarizing", "dephasing", "amplitude-damping", "bit-flip", "identity", "white"]


class Document(BaseModel):
    """Base for every config and report document: camelCase keys, snake_case attributes."""

    model_config = ConfigDict(alias_generator=to_camel, populate_by_name=True, extra="forbid")


class TargetSpec(Document):
    """Target state, either from a named generator or inline amplitudes."""

    generator: Optional[Generator] = Field(default=None, description="Named state generator.")
    amplitudes: Optional[List[Tuple[float, float]]] = Field(
        default=None, description="Inline amplitudes as [re, im] pairs in product-basis order."
    )
    parties: Optional[int] = Field(default=None, ge=2, description="Number of parties for ghz and w.")
    d: Optional[int] = Field(default=None, ge=2, description="Local dimension for ghz and maximally-entangled.")
    seed: Optional[int] = Field(default=None, ge=0, description="Seed for the random generator.")

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "TargetSpec":
        if (self.generator is None) == (self.amplitudes is None):
            raise ValueError("target needs exactly one of 'generator' or 'amplitudes'")
        if self.generator == "w" and self.d not in (None, 2):
            raise ValueError("the w generator is defined for qubits only")
        return self

    def generator_dims(self) -> Optional[List[int]]:
        """Factor dimensions implied by the generator, or None when they must be given."""

        if self.generator == "bell":
            return [2, 2]
        if self.generator == "ghz":
            return [self.d or 2] * (self.parties or 3)
        if self.generator == "w":
            return [2] * (self.parties or 3)
        if self.generator == "maximally-entangled":
            return [self.d or 2] * 2
        return None


class NoiseSpec(Document):
    """Noise applied to the target: a built-in channel on one factor, white noise, or a Kraus file."""

    name: Optional[NoiseName] = Field(default=None, description="Built-in noise model.")
    p: float = Field(default=0.0, ge=0.0, le=1.0, description="Noise strength.")
    factor: Optional[int] = Field(default=None, ge=0, description="Factor the channel acts on; defaults to the last.")
    kraus_file: Optional[str] = Field(default=None, description="Path to a JSON document with Kraus operators.")

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "NoiseSpec":
        if (self.name is None) == (self.kraus_file is None):
            raise ValueError("noise needs exactly one of 'name' or 'krausFile'")
        return self

    @property
    def is_channel(self) -> bool:
        return self.name != "white"


class ExperimentConfig(Document):
    """A single experiment: target, conjugate basis, optional noise and sampling parameters."""

    schema_version: int = Field(default=CONFIG_SCHEMA_VERSION, description="Config document schema version.")
    mode: Optional[Mode] = Field(default=None, description="Run mode; the CLI subcommand takes precedence.")
    target: TargetSpec
    dims: Optional[List[int]] = Field(default=None, description="Tensor-factor dimensions of the target.")
    party_order: Optional[List[int]] = Field(default=None, description="Party ordering for the recursive cuts.")
    conjugate_basis: Union[Literal["fourier"], List[List[float]]] = Field(
        default="fourier", description="'fourier' or an inline d x d phase table in radians."
    )
    noise: Optional[NoiseSpec] = Field(default=None, description="Noise model producing the tested state.")
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0, description="Hoeffding accuracy per test.")
    delta: float = Field(default=0.01, gt=0.0, lt=1.0, description="Total failure probability.")
    seed: Optional[int] = Field(default=None, ge=0, description="Seed of the sampling stream.")
    samples: Optional[int] = Field(default=None, ge=1, description="Samples per test; overrides the Hoeffding count.")
    rescaled: bool = Field(default=False, description="Also simulate the rescaled Q-test effects.")

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported schemaVersion {self.schema_version}")
        dims = self.resolved_dims
        if dims is None:
            raise ValueError("dims are required for inline amplitudes and the random generator")
        if any(dim < 1 for dim in dims) or len(dims) < 2:
            raise ValueError("dims must list at least two positive factor dimensions")
        implied = self.target.generator_dims()
        if implied is not None and self.dims is not None and list(self.dims) != implied:
            raise ValueError(f"dims {self.dims} disagree with generator dims {implied}")
        if self.target.amplitudes is not None and len(self.target.amplitudes) != math.prod(dims):
            raise ValueError(f"{len(self.target.amplitudes)} amplitudes do not match dims {dims}")
        if self.target.generator == "random" and self.target.seed is None and self.seed is None:
            raise ValueError("the random generator needs a seed")
        if self.party_order is not None and sorted(self.party_order) != list(range(len(dims))):
            raise ValueError(f"partyOrder {self.party_order} is not a permutation of {len(dims)} parties")
        if self.noise is not None and self.noise.factor is not None and self.noise.factor >= len(dims):
            raise ValueError(f"noise factor {self.noise.factor} out of range for {len(dims)} parties")
        if self.rescaled and len(dims) != 2:
            raise ValueError("rescaled Q-test effects need a bipartite target")
        if self.mode in ("certify", "channel-bound") and self.seed is None:
            raise ValueError(f"mode '{self.mode}' requires a seed")
        if self.mode == "channel-bound":
            if self.noise is None or not self.noise.is_channel:
                raise ValueError("mode 'channel-bound' requires a channel noise model")
            if len(dims) != 2 or self.noise.factor not in (None, 1):
                raise ValueError("mode 'channel-bound' needs a bipartite target with the channel on factor 1")
        return self

    @property
    def resolved_dims(self) -> Optional[List[int]]:
        return list(self.dims) if self.dims is not None else self.target.generator_dims()


class KrausDocument(Document):
    """Kraus operators of a channel; each matrix is a list of rows of [re, im] pairs."""

    schema_version: int = Field(default=CONFIG_SCHEMA_VERSION, description="Kraus document schema version.")
    kraus: List[List[List[Tuple[float, float]]]] = Field(min_length=1, description="Kraus operators.")
