"""Template corpora standing in for each of the experiment domains.

Source and target sentences are written text with numeric entities; they
share no templates and no content words, only stopwords and the shapes of
the entities.  The general domain imitates speech transcripts, so it is
already in spoken form (lowercase words, numbers spelled out).
"""

from __future__ import annotations

import random
import re
from typing import Iterator

DOMAINS = ("source", "target", "general")

# ---------------------------------------------------------------- source: market and logistics reports
SOURCE_TEMPLATES = [
    "shares of {org} rose to {cur} after the {noun} report",
    "the {noun} index closed at {card} points on {day}",
    "{org} posted revenue of {cur} for the quarter",
    "analysts expect {frac} of {org} {noun} to ship by {day}",
    "freight volume reached {card} containers at the {place} terminal",
    "the {place} warehouse shipped {meas} of {goods} on {day}",
    "{org} cut its {noun} forecast by {pct} this quarter",
    "the {ord} shipment of {goods} left {place} at {time}",
    "{org} bought {card} tons of {goods} for {cur}",
    "bond yields moved {frac} of a point after the {noun} auction",
    "the {noun} desk reported {card} trades worth {cur}",
    "{org} ranked {ord} among {goods} exporters with {pct} growth",
    "a pallet of {goods} weighs {meas} at the {place} depot",
    "{place} customs cleared {card} crates of {goods} by {time}",
    "the board approved a dividend of {cur} per share",
    "{frac} of the {goods} inventory moved through {place} ports",
]
SOURCE_WORDS = {
    "org": ["acme", "globex", "initech", "umbrella", "vandelay", "hooli", "stark", "wayne", "tyrell",
            "cyberdyne", "soylent", "wonka", "oscorp", "nakatomi", "gringotts", "monarch"],
    "noun": ["earnings", "commodity", "treasury", "futures", "equity", "dividend", "inflation",
             "payroll", "export", "tariff", "margin", "liquidity", "benchmark", "portfolio"],
    "place": ["rotterdam", "singapore", "antwerp", "houston", "shenzhen", "hamburg", "busan",
              "felixstowe", "valencia", "savannah", "durban", "santos"],
    "goods": ["copper", "soybeans", "steel", "cotton", "lumber", "aluminium", "coffee", "rubber",
              "nickel", "wheat", "cement", "textiles"],
    "day": ["monday", "tuesday", "wednesday", "thursday", "friday"],
}

# ---------------------------------------------------------------- target: household conversation
TARGET_TEMPLATES = [
    "can you remind me to water the {plant} at {time}",
    "my {kin} gave me {cur} for my birthday",
    "add {card} {food} to my shopping list",
    "i only ate {frac} of the {food} tonight",
    "how much is {cur} in {currency} money",
    "set the {appliance} timer for {card} minutes",
    "we need {frac} cup of {food} for the recipe",
    "my {kin} turns {card} next {month}",
    "the {pet} needs its medicine at {time}",
    "i spent {cur} on {food} and snacks",
    "text my {kin} that dinner starts at {time}",
    "put {card} {food} in the {appliance} please",
    "our {pet} ate {frac} of my sandwich",
    "the {appliance} repair cost {cur} last {month}",
    "buy {card} bags of {pet} treats",
    "it is my {kin}'s {ord} birthday in {month}",
]
TARGET_WORDS = {
    "plant": ["ferns", "roses", "tomatoes", "orchids", "basil", "cactus", "tulips", "succulents"],
    "kin": ["mom", "dad", "grandma", "grandpa", "sister", "brother", "aunt", "uncle", "cousin",
            "nephew", "niece"],
    "food": ["apples", "bananas", "eggs", "bagels", "pizza", "pancakes", "carrots", "cookies",
             "muffins", "noodles", "yogurt", "cereal", "lemons", "pickles"],
    "currency": ["canadian", "mexican", "japanese", "swiss", "korean", "indian"],
    "appliance": ["oven", "microwave", "dishwasher", "dryer", "fridge", "toaster", "blender"],
    "month": ["january", "february", "march", "april", "june", "july", "august", "september",
              "october", "november", "december"],
    "pet": ["dog", "cat", "puppy", "kitten", "hamster", "parrot", "bunny"],
}

# ---------------------------------------------------------------- general: transcribed chat
GENERAL_TEMPLATES = [
    "{filler} i think it was about {num} years ago",
    "{filler} we moved there when i was {num}",
    "she said it cost like {num} dollars or something",
    "{filler} there were maybe {num} people at the {event}",
    "i worked there for {num} years {filler}",
    "we drove {num} miles to see the {event}",
    "{filler} my kids are {num} and {num}",
    "it was {num} degrees outside {filler}",
    "i watched the {event} with {num} friends",
    "the {event} lasted {num} hours",
    "{filler} hello how are you doing",
    "yeah the {event} was really fun",
    "we talked about the {event} for a while",
    "do you have a favorite {topic}",
    "i really like {topic} {filler}",
    "what kind of {topic} do you like",
]
GENERAL_WORDS = {
    "filler": ["um", "uh", "yeah", "well", "oh", "you know", "i mean", "so"],
    "event": ["game", "concert", "wedding", "movie", "party", "parade", "reunion"],
    "topic": ["music", "food", "sports", "television", "books", "weather", "travel"],
}
NUMBER_WORDS = ["two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "twelve",
                "fifteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty",
                "ninety", "a hundred"]

_SLOT = re.compile(r"\{(\w+)\}")


def _ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        return f"{n}th"
    return str(n) + {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")


def _cardinal(rng: random.Random, domain: str) -> str:
    # reports quote large figures, conversations small ones
    if domain == "source":
        return str(rng.choice([rng.randint(100, 999), rng.randint(1000, 99999)]))
    return str(rng.choice([rng.randint(1, 12), rng.randint(13, 99)]))


def _currency(rng: random.Random, domain: str) -> str:
    if domain == "source":
        amount = rng.choice([rng.randint(100, 999), rng.randint(1000, 9999)])
        sym = rng.choice("$$£€")
    else:
        amount = rng.choice([rng.randint(1, 20), rng.randint(21, 99)])
        sym = "$"
    if rng.random() < 0.3:
        return f"{sym}{amount}.{rng.randint(1, 99):02d}"
    return f"{sym}{amount}"


def _fraction(rng: random.Random, domain: str) -> str:
    den = rng.choice([2, 3, 4, 5, 8, 10]) if domain == "source" else rng.choice([2, 3, 4])
    return f"{rng.randint(1, den - 1)}/{den}"


def _time(rng: random.Random) -> str:
    return f"{rng.randint(1, 12)}:{rng.choice([0, 5, 10, 15, 20, 30, 45, 50]):02d}"


def _fill(template: str, rng: random.Random, domain: str, words: dict) -> str:
    def slot(m):
        name = m.group(1)
        if name == "card":
            return _cardinal(rng, domain)
        if name == "cur":
            return _currency(rng, domain)
        if name == "frac":
            return _fraction(rng, domain)
        if name == "time":
            return _time(rng)
        if name == "pct":
            return f"{rng.randint(2, 60)}%"
        if name == "meas":
            return f"{rng.randint(2, 900)}{rng.choice(['kg', 'lb', 'g'])}"
        if name == "ord":
            return _ordinal(rng.randint(1, 40))
        if name == "num":
            return rng.choice(NUMBER_WORDS)
        return rng.choice(words[name])
    return _SLOT.sub(slot, template)


def synth_corpus(domain: str, size: int, seed: int = 0) -> Iterator[str]:
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; choose from {', '.join(DOMAINS)}")
    if size <= 0:
        raise ValueError("corpus size must be positive")
    templates, words = {
        "source": (SOURCE_TEMPLATES, SOURCE_WORDS),
        "target": (TARGET_TEMPLATES, TARGET_WORDS),
        "general": (GENERAL_TEMPLATES, GENERAL_WORDS),
    }[domain]
    rng = random.Random(f"{domain}\x1f{seed}")
    for _ in range(size):
        yield _fill(rng.choice(templates), rng, domain, words)
