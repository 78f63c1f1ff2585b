import numpy as np
import pytest

from tgbs.streams import (
    BENCH,
    DRAW,
    GRAPH,
    INTERFEROMETER,
    RUN,
    UNIFORM,
    derive_seed,
    stream,
)


def test_domain_labels_distinct():
    labels = (DRAW, INTERFEROMETER, GRAPH, UNIFORM, RUN, BENCH)
    assert len(set(labels)) == len(labels)


def test_same_labels_same_stream():
    a = stream(42, DRAW, 3).random(8)
    b = stream(42, DRAW, 3).random(8)
    assert np.array_equal(a, b)


def test_label_changes_stream():
    base = stream(42, DRAW, 3).random(4)
    assert not np.array_equal(base, stream(42, DRAW, 4).random(4))
    assert not np.array_equal(base, stream(42, UNIFORM, 3).random(4))
    assert not np.array_equal(base, stream(43, DRAW, 3).random(4))


def test_derive_seed_deterministic():
    s = derive_seed(7, RUN, 2)
    assert isinstance(s, int)
    assert s == derive_seed(7, RUN, 2)
    assert s != derive_seed(7, RUN, 3)


def test_non_integer_seed_rejected():
    with pytest.raises(ValueError):
        stream(1.5, DRAW)
    with pytest.raises(ValueError):
        stream(1, "draw")
