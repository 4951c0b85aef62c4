import numpy as np


def fractional_power_control(beta: np.ndarray, M, theta: float, p_max: float) -> np.ndarray:
    """Uplink fractional power control over each UE's serving set.

    ``M`` is a list of AP index sets, or None for all APs.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    K, L = beta.shape
    if M is None:
        agg = beta.sum(axis=1)
    else:
        if any(len(m) == 0 for m in M):
            raise ValueError("every UE needs a nonempty serving set")
        agg = np.array([beta[k, sorted(M[k])].sum() for k in range(K)])
    return p_max * agg.min() ** theta / agg**theta
