import pytest

from itn.core import Grammar, Lexicon


@pytest.fixture(scope="session")
def grammar():
    return Grammar.load()


@pytest.fixture(scope="session")
def lexicon():
    return Lexicon.load()
