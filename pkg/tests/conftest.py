import pytest

from artirig.fields import FieldConfig
from artirig.fitting import FitConfig, fit
from artirig.scene import SyntheticSceneSpec, synth_dataset

TINY_SPEC = dict(n_frames=3, width=20, height=20, focal=25.0, n_samples=8,
                 feature_dim=4)


def tiny_fit_config(**overrides) -> FitConfig:
    base = dict(steps=3, n_bones=2, n_samples=6, sds_samples=4,
                batch_rays=40, novel_rays=10,
                field=FieldConfig(width=8, depth=2, L_sdf=2, L_color=2,
                                  L_feature=2, feature_dim=4))
    base.update(overrides)
    return FitConfig(**base)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    synth_dataset(SyntheticSceneSpec(**TINY_SPEC), out)
    return out


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    fit(tiny_dataset, tiny_fit_config(), out_dir=out)
    return out / "checkpoint.json"
