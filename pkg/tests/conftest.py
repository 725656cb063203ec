import numpy as np
import pytest

from app import create_app
from config import TestConfig
from models import db
from services.geometry import PointPattern, Window
from services.sampler import SamplerConfig


@pytest.fixture
def app():
    app = create_app(TestConfig)
    yield app
    with app.app_context():
        db.session.remove()
        db.drop_all()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def unit_window():
    return Window.square(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_pattern(rng):
    return PointPattern(rng.random((150, 2)))


@pytest.fixture
def quick_chain():
    """Short chain on the unit square, long enough to forget a Poisson start."""
    return SamplerConfig(steps=20_000, burn_in=10_000, seed=7)
