import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def within_se(estimate, target, se, k=3.0):
    """True where |estimate - target| <= k * se."""
    import numpy as np

    return np.abs(np.asarray(estimate) - np.asarray(target)) <= k * np.asarray(se)
