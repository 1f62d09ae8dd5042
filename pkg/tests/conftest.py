import random

import pytest

from biasaudit import MockScorer, SwapLexicon, load_assets

pytest_plugins = ()


@pytest.fixture(scope="session")
def assets():
    return load_assets()


@pytest.fixture(scope="session")
def lexicon(assets):
    return SwapLexicon.default(assets.name_pairs)


@pytest.fixture
def uniform_scorer():
    return MockScorer()


@pytest.fixture
def female_biased_scorer():
    # every female term twice as likely as its male counterpart
    return MockScorer(
        base_probability=0.2,
        candidate_weights={"she": 1.0, "her": 1.0},
    )


# -- grammatical fuzz sentences for the swap involution ------------------------

_SUBJECTS = ["He", "She", "The guy", "The woman", "The man", "The lady", "A boy", "A girl"]
_NAME_SLOT = "NAME"
# Object pronouns ({obj}) sit before punctuation or prepositions only: the
# "her"-disambiguation lookahead cannot recover an object reading before an
# open-class word (see the cda module docstring), and these shapes stay on
# the grammatical side of that documented limit.
_SHAPES = [
    "{subj} wants to become a famous {occ}.",
    "{subj} said that the {occ} left early, and {nom} was glad.",
    "{poss} cousin works as a {occ} downtown.",
    "The {occ} thanked {obj} for the warm welcome.",
    "{subj} told the {occ} about {poss} plans.",
    "Everyone praised {obj}, because the {occ} trusted {obj}.",
    "{poss} dream of being a {occ} kept {obj} on course.",
    "The {occ} and {poss} brother visited {name}.",
    "{name} is a {occ}, and {nom} loves {poss} job.",
    "After the meeting, the {occ} called {obj} at noon.",
]


def make_fuzz_sentences(n, assets, seed=1234):
    """Grammatical sentences mixing pronouns, nouns, and names with occupations."""
    rng = random.Random(seed)
    occupations = [o.word for o in assets.occupations]
    names = [p.male for p in assets.name_pairs] + [p.female for p in assets.name_pairs]
    out = []
    for _ in range(n):
        shape = rng.choice(_SHAPES)
        male = rng.random() < 0.5
        sentence = shape.format(
            subj=rng.choice(_SUBJECTS),
            occ=rng.choice(occupations),
            nom="he" if male else "she",
            poss="his" if male else "her",
            obj="him" if male else "her",
            name=rng.choice(names),
        )
        out.append(sentence)
    return out


@pytest.fixture(scope="session")
def fuzz_sentences(assets):
    return make_fuzz_sentences(1000, assets)
