"""Named parameter bundles tying scene, array, task, and model settings.

The ``paper`` profile mirrors the dataset-generation setup (64-antenna UPA,
48 subcarriers, 28 GHz, 4 users, 100x100 scene grids, 2000/300/300 scenario
split); the ``toy`` profile is the desk-scale configuration every test runs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .channel import ArrayGeometry, half_wavelength
from .model import ModelConfig
from .scene import SceneProfile


@dataclass(frozen=True)
class TaskParams:
    k_users: int
    l_p_ce: int
    l_p_loc: int
    l_d: int
    code_n: int
    code_m: int
    snr_db: float = 10.0       # base SNR for stored observations
    csi_snr_db: float = 10.0   # CSI corruption for the precoding input
    ebn0_db: float = 5.0       # base Eb/N0 for stored decoding samples
    p_max: float = 1.0


@dataclass(frozen=True)
class Profile:
    name: str
    scene: SceneProfile
    geom: ArrayGeometry
    tasks: TaskParams
    split_fracs: tuple         # (train, val, test) scenario fractions
    samples_per_scenario: int
    scenarios: int


def toy_profile() -> Profile:
    geom = ArrayGeometry(n_h=4, n_v=4, spacing=half_wavelength(28e9),
                         f_c=28e9, n_sub=8, delta_f=1.8e3)
    return Profile(
        name="toy",
        scene=SceneProfile(grid_w=32),
        geom=geom,
        tasks=TaskParams(k_users=2, l_p_ce=2, l_p_loc=4, l_d=2,
                         code_n=16, code_m=8, p_max=2.0),
        split_fracs=(0.8, 0.1, 0.1),
        samples_per_scenario=10,
        scenarios=250,
    )


def paper_profile() -> Profile:
    geom = ArrayGeometry(n_h=16, n_v=4, spacing=half_wavelength(28e9),
                         f_c=28e9, n_sub=48, delta_f=1.8e3)
    return Profile(
        name="paper",
        scene=SceneProfile(grid_w=100),
        geom=geom,
        tasks=TaskParams(k_users=4, l_p_ce=4, l_p_loc=8, l_d=4,
                         code_n=64, code_m=32, p_max=4.0),
        split_fracs=(2000 / 2600, 300 / 2600, 300 / 2600),
        samples_per_scenario=50,
        scenarios=2600,
    )


def get_profile(name: str) -> Profile:
    if name == "toy":
        return toy_profile()
    if name == "paper":
        return paper_profile()
    raise ValueError(f"unknown profile {name!r} (expected 'toy' or 'paper')")


def model_config_for(profile: Profile) -> ModelConfig:
    if profile.name == "toy":
        return ModelConfig(
            n_h=4, n_v=4, n_sub=8, n_users=2, l_p_ce=2, l_p_loc=4, l_d=2,
            code_n=16, code_m=8, grid_w=32, patch=8, dim=32, depth=2, heads=4,
            scene_depth=2, hyper_emb=32, hyper_hidden=(128,), seq_cap=64)
    return ModelConfig(
        n_h=16, n_v=4, n_sub=48, n_users=4, l_p_ce=4, l_p_loc=8, l_d=4,
        code_n=64, code_m=32, grid_w=100, patch=10, dim=768, depth=12, heads=12,
        scene_depth=4, hyper_emb=256, hyper_hidden=(256,), seq_cap=256)


def train_defaults(profile: Profile) -> dict:
    """Per-profile TrainConfig defaults; the full-scale profile keeps the
    long-schedule optimizer settings."""
    if profile.name == "toy":
        return {"epochs": 20, "batch_size": 25, "lr0": 2e-3}
    return {"epochs": 500, "batch_size": 100, "lr0": 1e-4}


def split_counts(profile: Profile, scenarios: int) -> dict:
    """Scenario counts per split; val/test rounded from the profile fractions."""
    val = max(1, round(scenarios * profile.split_fracs[1]))
    test = max(1, round(scenarios * profile.split_fracs[2]))
    train = scenarios - val - test
    if train < 1:
        raise ValueError(f"{scenarios} scenarios is too few to split")
    return {"train": train, "val": val, "test": test}
