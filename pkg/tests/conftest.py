import numpy as np
import pytest

from accelmatch.model import Accelerator, Startup, build_market


def make_market(
    market_id="m",
    quotas=(1, 1),
    n_startups=None,
    states=None,
    home_states=None,
    startup_features=None,
    accelerator_features=None,
    interactions=(),
    overrides=None,
):
    """Hand-built market helper used across the suite."""
    A = len(quotas)
    S = n_startups if n_startups is not None else int(sum(quotas))
    states = states or ["XX"] * A
    home_states = home_states or ["XX"] * S
    startup_features = startup_features or [{} for _ in range(S)]
    accelerator_features = accelerator_features or [{} for _ in range(A)]
    accelerators = [
        Accelerator(
            id=f"{market_id}_a{i}",
            quota=int(quotas[i]),
            state=states[i],
            features=dict(accelerator_features[i]),
        )
        for i in range(A)
    ]
    startups = [
        Startup(
            id=f"{market_id}_s{j}",
            home_state=home_states[j],
            features=dict(startup_features[j]),
        )
        for j in range(S)
    ]
    return build_market(
        market_id, accelerators, startups, interactions=interactions, overrides=overrides
    )


@pytest.fixture
def two_by_two():
    """2 accelerators with one seat each, 2 startups, explicit pair values.

    Values (rows a0, a1; columns s0, s1): [[2.0, 1.5], [1.0, 0.5]].
    """
    market = make_market("m22", quotas=(1, 1), overrides={"base_value": [[2.0, 1.5], [1.0, 0.5]]})
    u = np.array([[2.0, 1.5], [1.0, 0.5]])
    return market, u
