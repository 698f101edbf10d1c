"""Shared fixtures and dataset builders for the test suite.

The whole suite runs with sockets disabled: an autouse session fixture
replaces the connecting parts of the socket module with functions that
raise.  Any test that would touch the network fails loudly instead of
silently depending on it.
"""

from __future__ import annotations

import socket

import pytest

from forestllm import Dataset, Feature, Schema


class _NetworkBlocked(RuntimeError):
    pass


def _deny(*args, **kwargs):
    raise _NetworkBlocked("network access attempted during tests")


@pytest.fixture(autouse=True, scope="session")
def no_network():
    saved = (socket.socket.connect, socket.create_connection, socket.getaddrinfo)
    socket.socket.connect = _deny
    socket.create_connection = _deny
    socket.getaddrinfo = _deny
    yield
    socket.socket.connect, socket.create_connection, socket.getaddrinfo = saved


def clf_schema() -> Schema:
    return Schema(
        features=(Feature("age", "numeric"), Feature("job", "categorical")),
        target_name="deposit",
        task="classification",
        classes=("no", "yes"),
        task_description="Predict whether the client opens a deposit.",
    )


def reg_schema() -> Schema:
    return Schema(
        features=(Feature("rooms", "numeric"), Feature("district", "categorical")),
        target_name="price",
        task="regression",
        task_description="Predict the sale price of a home.",
    )


def build_dataset(schema: Schema, rows, targets) -> Dataset:
    """Rows plus a parallel target list; None marks a row as unlabeled."""
    labeled = tuple(i for i, t in enumerate(targets) if t is not None)
    unlabeled = tuple(i for i, t in enumerate(targets) if t is None)
    return Dataset(
        schema=schema,
        rows=tuple(tuple(row) for row in rows),
        labeled_idx=labeled,
        unlabeled_idx=unlabeled,
        raw_targets=tuple(targets),
    )


def bank_dataset() -> Dataset:
    """Eight labeled rows cleanly separated on age, plus four unlabeled."""
    rows = [
        (22.0, "student"),
        (28.0, "teacher"),
        (31.0, "teacher"),
        (39.0, "admin"),
        (47.0, "admin"),
        (52.0, "retired"),
        (58.0, "retired"),
        (63.0, "retired"),
        (25.0, "student"),
        (36.0, "admin"),
        (50.0, "teacher"),
        (61.0, "retired"),
    ]
    targets = ["yes", "yes", "yes", "yes", "no", "no", "no", "no",
               None, None, None, None]
    return build_dataset(clf_schema(), rows, targets)
