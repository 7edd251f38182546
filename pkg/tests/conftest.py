"""Shared fixtures: one measurement campaign, one built dataset, and one
trained model of each kind, reused across the whole suite."""

from __future__ import annotations

import pytest

from ndtwin.harmonize import load_dataset
from ndtwin.models import train_gbt, train_mlp
from ndtwin.pipeline import CampaignSpec, build_dataset, parse_trim, run_campaign
from ndtwin.telemetry import TelemetryStore

CAMPAIGN_SEED = 42


@pytest.fixture(scope="session")
def campaign_store(tmp_path_factory):
    store = TelemetryStore.open(tmp_path_factory.mktemp("store"))
    run_campaign(CampaignSpec(seed=CAMPAIGN_SEED), store)
    return store


@pytest.fixture(scope="session")
def dataset_dir(campaign_store, tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    build_dataset(
        campaign_store,
        train_users=(200, 400),
        test_users=(600,),
        pods=(1, 2, 3, 4, 5, 6),
        trim=parse_trim("percentile:1,99"),
        outdir=out,
        test_pods=(4, 5, 6),
    )
    return out


@pytest.fixture(scope="session")
def train_test(dataset_dir):
    return load_dataset(dataset_dir, "train"), load_dataset(dataset_dir, "test")


@pytest.fixture(scope="session")
def gbt_model(train_test):
    return train_gbt(train_test[0])


@pytest.fixture(scope="session")
def mlp_model(train_test):
    return train_mlp(train_test[0])


@pytest.fixture
def announce(capfd):
    """Print a line that bypasses pytest's output capture."""

    def _announce(line: str):
        with capfd.disabled():
            print(line, flush=True)

    return _announce
