"""Shared pytest fixtures."""

import pytest

from pslvqa import SimilarityOracle, ground_program, load_instance

from helpers import FIXTURES, load_problem


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture()
def two_answer_gp():
    """Ground program for the two-answer budget fixture."""
    prog, db = load_problem(
        FIXTURES / "two_answer" / "rules.psl",
        FIXTURES / "two_answer" / "data.jsonl",
    )
    return ground_program(prog, db)


@pytest.fixture()
def barn():
    """The stable question instance plus its stub similarity oracle."""
    instance, overrides = load_instance(FIXTURES / "barn")
    return instance, SimilarityOracle(overrides=overrides)


@pytest.fixture()
def barn_adversarial():
    """The same question after injecting church-supporting image evidence."""
    instance, overrides = load_instance(FIXTURES / "barn_adversarial")
    return instance, SimilarityOracle(overrides=overrides)
