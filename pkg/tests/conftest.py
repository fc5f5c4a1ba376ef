import pytest

from pausekit.textnorm import Vocabulary

BASIC_PIECES = [
    "[UNK]", "hello", "world", "abc", "cat", "wait", "##ing", "he", "said", "no",
    "the", "train", "she", "read", "a", "chap", "##ter", "of", "her", "favour", "##ite",
    "novel", "for", "quiet", "##ly", "un", "##believ", "##able",
    ".", ",", ";", ":", "!", "?", '"', "'", "(", ")",
]


@pytest.fixture
def vocab():
    return Vocabulary(BASIC_PIECES)


@pytest.fixture(scope="session")
def char_vocab():
    letters = "abcdefghijklmnopqrstuvwxyz-0123456789"
    return Vocabulary(["[UNK]"] + list(letters) + ["##" + c for c in letters] + list(".,;:!?\"'()"))
