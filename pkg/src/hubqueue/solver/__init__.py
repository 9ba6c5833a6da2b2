"""Location-allocation solvers with congestion capacity rows."""

from .allocation import AllocationResult, allocation_lp, enumerate_exact
from .bnb import branch_and_bound, build_relaxation
from .design import (INFEASIBLE, OPTIMAL, TIME_LIMIT, CapacityProfile, HubDesign,
                     capacity_profile, evaluate_design, hub_arrival, hub_arrivals)
from .verify import VerificationReport, verify_design

__all__ = [
    "AllocationResult", "CapacityProfile", "HubDesign", "INFEASIBLE", "OPTIMAL", "TIME_LIMIT",
    "VerificationReport", "allocation_lp", "branch_and_bound", "build_relaxation",
    "capacity_profile", "enumerate_exact", "evaluate_design", "hub_arrival", "hub_arrivals",
    "verify_design",
]
