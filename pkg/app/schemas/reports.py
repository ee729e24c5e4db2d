from __future__ import annotations

from typing import Dict, List, Mapping, Optional

from pydantic import Field

from app.schemas.experiment import Document, ExperimentConfig, Mode

REPORT_SCHEMA_VERSION = 1


class VerificationReport(Document):
    """Residual table of a stabilizer or family verification with pass/fail per check."""

    residuals: Dict[str, float] = Field(default_factory=dict, description="Named numerical residuals.")
    checks: Dict[str, bool] = Field(default_factory=dict, description="Pass/fail of each named check.")
    passed: bool = Field(default=True, description="True when every check passed.")

    @classmethod
    def from_checks(cls, residuals: Mapping[str, float], checks: Mapping[str, bool]) -> "VerificationReport":
        return cls(residuals=dict(residuals), checks=dict(checks), passed=all(checks.values()))


class EstimateReport(Document):
    """Sampled certification of a stabilizer pair or family."""

    pass_rates: Dict[str, float] = Field(description="Empirical acceptance rate per test (P, Q or leaf word).")
    samples_per_test: int = Field(gt=0, description="Protocol runs per test.")
    n_tests: int = Field(gt=0, description="Number of tests combined in the certificate.")
    epsilon: float = Field(gt=0.0, description="Hoeffding accuracy per test.")
    delta: float = Field(gt=0.0, lt=1.0, description="Total failure probability (union bound).")
    fidelity_lower_bound: float = Field(description="Plug-in bound: sum of rates minus (tests - 1).")
    confidence_adjusted_bound: float = Field(description="Plug-in bound minus tests * epsilon.")
    exact_pass_probabilities: Dict[str, float] = Field(default_factory=dict, description="tr(rho P) per test.")
    exact_bound: Optional[float] = Field(default=None, description="Bound from the exact pass probabilities.")
    exact_fidelity_sq: Optional[float] = Field(default=None, description="tr(rho psi) of the simulated state.")
    rescaled_q_acceptance: Optional[float] = Field(
        default=None, description="Empirical acceptance of the rescaled Q-test; carries no certificate."
    )


class SampledChannelEstimate(Document):
    samples_per_term: int = Field(gt=0, description="Probe states drawn per ensemble term.")
    epsilon: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=1.0)
    mean_schmidt: float = Field(description="Empirical mean of the Schmidt-ensemble Bernoulli trials.")
    mean_conj: float = Field(description="Empirical mean of the conjugate-ensemble Bernoulli trials.")
    adjusted_bound: float = Field(description="mean_schmidt + mean_conj - 2 epsilon - 1.")


class ChannelBoundReport(Document):
    """Lower bound on a channel's entanglement fidelity from two ensemble fidelities."""

    ent_fidelity_sq: Optional[float] = Field(default=None, description="Exact entanglement fidelity tr psi (id x T)(psi).")
    ensemble_term_schmidt: float = Field(description="sum_j lambda_j F(|j>; T)^2.")
    ensemble_term_conj: float = Field(description="sum_alpha F(|psi_alpha>; T)^2 / d.")
    bound: float = Field(description="Sum of the two ensemble terms minus one.")
    trace_rho_p: Optional[float] = Field(default=None, description="tr(rho P) with rho = (id x T)(psi).")
    trace_rho_q: Optional[float] = Field(default=None, description="tr(rho Q) with rho = (id x T)(psi).")
    sampled: Optional[SampledChannelEstimate] = Field(default=None, description="Finite-sample estimate.")


class Report(Document):
    """Outcome of one CLI run."""

    schema_version: int = Field(default=REPORT_SCHEMA_VERSION, description="Report document schema version.")
    mode: Mode
    config: ExperimentConfig = Field(description="Echo of the validated configuration.")
    residual: Dict[str, float] = Field(default_factory=dict, description="Residual table.")
    checks: Dict[str, bool] = Field(default_factory=dict, description="Pass/fail per check.")
    passed: bool = Field(description="True when every check passed; drives the exit status.")
    schmidt_coefficients: List[float] = Field(default_factory=list, description="Top-level Schmidt coefficients.")
    projector_ranks: Dict[str, int] = Field(default_factory=dict, description="Rank of each constructed projector.")
    bounds: Dict[str, float] = Field(default_factory=dict, description="Fidelity bounds and exact fidelities.")
    estimate: Optional[EstimateReport] = Field(default=None, description="Sampled certification block.")
    channel: Optional[ChannelBoundReport] = Field(default=None, description="Channel-bound block.")
    timing: Optional[Dict[str, float]] = Field(default=None, description="Wall-clock seconds per phase.")
