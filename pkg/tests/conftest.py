import os

# single-threaded BLAS: the batched training path is allocation-bound and
# multi-threaded GEMM thrashes on small shared runners; must be set before
# numpy is first imported
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from pathlib import Path

import numpy as np
import pytest

from bspinn import binomial_put, train
from bspinn.cli import load_run_config

REPO_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = REPO_ROOT / "configs"
DATA_DIR = Path(__file__).resolve().parent / "data"

EVAL_S_GRID = np.linspace(0.0, 160.0, 50)
EVAL_T_GRID = np.linspace(0.0, 1.0, 50)


@pytest.fixture(scope="session")
def call_run_config():
    return load_run_config(CONFIG_DIR / "call_table3.json")


@pytest.fixture(scope="session")
def put_run_config():
    return load_run_config(CONFIG_DIR / "put_table3.json")


@pytest.fixture(scope="session")
def call_spec(call_run_config):
    return call_run_config.spec


@pytest.fixture(scope="session")
def put_spec(put_run_config):
    return put_run_config.spec


@pytest.fixture(scope="session")
def trained_call(call_run_config):
    """Desk-scale call training; shared by the residual, market and
    acceptance tests (runs once per session, a few minutes)."""
    cfg = call_run_config
    params, trace = train(cfg.spec, cfg.network, cfg.training)
    return params, trace


@pytest.fixture(scope="session")
def trained_put(put_run_config):
    cfg = put_run_config
    params, trace = train(cfg.spec, cfg.network, cfg.training)
    return params, trace


@pytest.fixture(scope="session")
def binomial_ref_surface(put_spec):
    """n=2000 binomial surface on the shared 50x50 evaluation grid."""
    return binomial_put(put_spec, 2000, EVAL_S_GRID, EVAL_T_GRID)


@pytest.fixture(scope="session")
def binomial_fine_surface(put_spec):
    """Fine-mesh binomial surface for finite-difference residual checks
    and boundary extraction (about 20s, built once)."""
    return binomial_put(put_spec, 2000,
                        s_grid=np.linspace(0.0, 160.0, 321),
                        t_grid=np.linspace(0.0, 1.0, 201))
