"""
Standalone-versus-combined overhead estimate.

The overhead of a configuration is its mean total minus the baseline's. The
combined run is estimated as baseline + overhead(SDC only) + overhead(PF
only); the discrepancy of the real combined run from that estimate is the
interaction between the two kinds of resilience.
"""

from dataclasses import asdict, dataclass
from typing import Dict

from backend.code.errors import ConfigMismatch
from backend.code.harness.config import PROBLEM_KEYS
from backend.code.harness.report import RunReport
from backend.code.structured_logging import harness_logger

MEASURES = ("total_time", "spmv_count")


@dataclass(frozen=True)
class OverheadEstimate:
    measure: str
    baseline: float
    se_overhead: float
    pf_overhead: float
    estimate: float
    multi: float

    @property
    def discrepancy(self) -> float:
        return self.multi - self.estimate

    def to_dict(self) -> Dict[str, float]:
        data = asdict(self)
        data["discrepancy"] = self.discrepancy
        return data


@dataclass(frozen=True)
class ComparisonReport:
    config_hashes: Dict[str, str]
    estimates: Dict[str, OverheadEstimate]

    def to_dict(self) -> dict:
        return {
            "config_hashes": dict(self.config_hashes),
            "estimates": {measure: estimate.to_dict() for measure, estimate in self.estimates.items()},
        }


def compare_runs(baseline: RunReport, se_only: RunReport, pf_only: RunReport, multi: RunReport) -> ComparisonReport:
    """
    Raises:
        ConfigMismatch: the reports do not share a problem and rank configuration
    """
    reports = {"baseline": baseline, "se": se_only, "pf": pf_only, "multi": multi}
    reference = {key: baseline.config.get(key) for key in PROBLEM_KEYS}
    for name, report in reports.items():
        shape = {key: report.config.get(key) for key in PROBLEM_KEYS}
        if shape != reference:
            mismatched = sorted(k for k in PROBLEM_KEYS if shape[k] != reference[k])
            raise ConfigMismatch(f"report '{name}' differs from the baseline in {mismatched}")

    estimates = {}
    for measure in MEASURES:
        base = baseline.mean(measure)
        se_overhead = se_only.mean(measure) - base
        pf_overhead = pf_only.mean(measure) - base
        estimates[measure] = OverheadEstimate(
            measure=measure,
            baseline=base,
            se_overhead=se_overhead,
            pf_overhead=pf_overhead,
            estimate=base + se_overhead + pf_overhead,
            multi=multi.mean(measure),
        )
    comparison = ComparisonReport({name: r.config_hash for name, r in reports.items()}, estimates)
    harness_logger.info(
        "runs_compared",
        **{f"{m}_discrepancy": e.discrepancy for m, e in estimates.items()},
    )
    return comparison
