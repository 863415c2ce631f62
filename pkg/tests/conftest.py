import pytest

from tempograph import Config, Database
from tempograph.history import AnchorPolicy


@pytest.fixture
def db():
    with Database(Config()) as d:
        yield d


def make_db(**kw):
    if "anchor" in kw and isinstance(kw["anchor"], str):
        kw["anchor"] = AnchorPolicy.parse(kw["anchor"])
    return Database(Config(**kw))
