"""Simulation and maximum-criterion estimation for (2,1) random walks in
i.i.d. parametric random environments."""

__version__ = "0.1.0"

from .env import FamilySpec, SiteLaw, log_moment, sample_site
from .walk import WalkRecord, simulate_to, count_identity_check
from .bpire import GenVector, extract_U, simulate_Z, tn_identity
from .likelihood import CountsView, kernel_Q, loglik, loglik_via_Z
from .estimate import consistency_experiment, mle, profile

__all__ = [
    "FamilySpec", "SiteLaw", "log_moment", "sample_site",
    "WalkRecord", "simulate_to", "count_identity_check",
    "GenVector", "extract_U", "simulate_Z", "tn_identity",
    "CountsView", "kernel_Q", "loglik", "loglik_via_Z",
    "consistency_experiment", "mle", "profile",
]
