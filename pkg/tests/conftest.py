import numpy as np

from reprofile.curves import TokenBucketProfile
from reprofile.provision import LinkClassState, PriorityAssignment


def random_link_state(rng, max_flows=5, max_k=3, min_flows=1):
    """Random per-link provisioning state with positive class deadlines."""
    k = int(rng.integers(1, max_k + 1))
    n_flows = int(rng.integers(min_flows, max_flows + 1))
    profiles, D, class_of = {}, {}, {}
    for i in range(n_flows):
        r = float(rng.uniform(0.5, 10.0))
        b = float(rng.uniform(0.5, 10.0))
        profiles[i] = TokenBucketProfile(r, b)
        D[i] = float(rng.uniform(0.0, 1.0)) * b / r
        class_of[i] = int(rng.integers(1, k + 1))
    T = np.sort(rng.uniform(0.01, 1.0, size=k))
    return LinkClassState(0, profiles, D, PriorityAssignment(k, class_of),
                          tuple(float(t) for t in T))


def service_values(state, h, ts):
    """S_h evaluated as right-limits on an array of absolute times."""
    from reprofile.provision import minimal_service_function

    return minimal_service_function(state, h).values_right(np.asarray(ts))
