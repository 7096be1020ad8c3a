from dataclasses import replace

import pytest

import moment_ident as mi


def make_env(
    alpha=0.5,
    beta=0.65,
    gamma=0.85,
    noise_u=None,
    noise_t=None,
    noise_y=None,
):
    return mi.ScmParams(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        noise_u=noise_u or mi.exponential(1.0),
        noise_t=noise_t or mi.exponential(1.05),
        noise_y=noise_y or mi.exponential(0.95),
    )


def make_scenario(change: mi.ChangeKind, env1=None, **env2_overrides):
    env1 = env1 or make_env()
    defaults = {
        mi.ChangeKind.EPS_T: {"noise_t": mi.exponential(0.5)},
        mi.ChangeKind.EPS_U: {"noise_u": mi.exponential(0.5)},
        mi.ChangeKind.GAMMA: {"gamma": 2.05},
        mi.ChangeKind.ALPHA: {"alpha": 0.85},
        mi.ChangeKind.EPS_Y: {"noise_y": mi.exponential(0.5)},
        mi.ChangeKind.EPS_T_AND_EPS_U: {
            "noise_t": mi.exponential(0.6),
            "noise_u": mi.exponential(0.7),
        },
    }[change]
    defaults.update(env2_overrides)
    return mi.ScenarioSpec(env1=env1, env2=replace(env1, **defaults), change=change)


@pytest.fixture
def base_env():
    return make_env()
