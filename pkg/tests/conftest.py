import json
import os

import pytest

from mdsyn.synthdata import toy_dataset


def write_config(dir_path, manifest_path, seed=7, **extra):
    cfg = {
        "manifest": str(manifest_path),
        "out_dir": str(os.path.join(dir_path, "out")),
        "cache_dir": str(os.path.join(dir_path, "cache")),
        "seed": seed,
        "workers": 1,
    }
    cfg.update(extra)
    path = os.path.join(dir_path, "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2)
    return path


@pytest.fixture
def toy_pipeline(tmp_path):
    """Toy dataset plus a config pointing at it; returns (config, manifest)."""
    manifest_path = toy_dataset(tmp_path / "data", n_pairs=3, seed=0)
    config_path = write_config(tmp_path, manifest_path)
    return config_path, manifest_path
