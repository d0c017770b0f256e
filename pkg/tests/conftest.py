import numpy as np
import pytest

from privwad.measures import DiscreteMeasure, uniform_measure


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cloud():
    """Factory for seeded uniform Gaussian clouds."""

    def make(n, d=2, seed=0, shift=0.0, scale=1.0):
        r = np.random.default_rng(seed)
        return uniform_measure(shift + scale * r.standard_normal((n, d)))

    return make


@pytest.fixture
def weighted():
    def make(n, d=2, seed=0):
        r = np.random.default_rng(seed)
        w = r.dirichlet(np.full(n, 5.0))
        return DiscreteMeasure(r.standard_normal((n, d)), w / w.sum())

    return make


def pts(*xs):
    """1-D uniform measure from scalars."""
    return uniform_measure(np.array(xs, dtype=float).reshape(-1, 1))


def tcp_session(protocol, mu, nu, cfg, timeout=20.0):
    """Run one session over loopback TCP; returns (client report, server report)."""
    import socket
    import threading

    from privwad.protocol import connect, serve

    lsock = socket.create_server(("127.0.0.1", 0))
    port = lsock.getsockname()[1]
    out = {}

    def server():
        try:
            out["server"] = serve(lsock, nu, timeout=timeout)
        except Exception as exc:  # surfaced below
            out["server_error"] = exc

    th = threading.Thread(target=server, daemon=True)
    th.start()
    try:
        client = connect(("127.0.0.1", port), mu, cfg, timeout=timeout, session="inproc")
    finally:
        th.join(timeout)
        lsock.close()
    if "server_error" in out:
        raise out["server_error"]
    return client, out["server"]
