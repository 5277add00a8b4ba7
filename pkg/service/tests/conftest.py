from __future__ import annotations

import pytest

from auglm_service import ServiceConfig, create_app
from auglm_service.backends import load_backend
from auglm_service.server import ThreadedServer


def make_backend(**overrides) -> object:
    return load_backend(ServiceConfig(**overrides))


@pytest.fixture
def live_service():
    """Factory starting a real uvicorn server on a free port.

    Yields a callable returning the base URL; servers shut down at
    teardown. Each call builds a fresh backend so state mutated by
    train_step never leaks between tests.
    """
    running: list[ThreadedServer] = []

    def start(**config_overrides) -> str:
        config = ServiceConfig(**config_overrides)
        server = ThreadedServer(create_app(load_backend(config), config))
        server.__enter__()
        running.append(server)
        return server.url

    yield start
    for server in running:
        server.__exit__(None, None, None)
