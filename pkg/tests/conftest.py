from __future__ import annotations

from pathlib import Path

import pytest

from rankfusion import kernels
from synth import make_collection

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def synth_files(tmp_path):
    return make_collection().write(tmp_path)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)
