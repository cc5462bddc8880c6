"""Shared fixtures: synthetic corpora, planted-DNF data, gradient oracle."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from gradrules import FeedForwardClassifier

CLASS_WORDS = {
    "sci.space": [
        "orbit", "shuttle", "nasa", "launch", "moon", "solar", "spacecraft",
        "rocket", "astronaut", "satellite", "lunar", "telescope", "gravity",
        "atmosphere", "comet", "galaxy", "payload", "booster", "apollo",
        "stellar", "mars", "reentry", "cosmonaut", "perigee", "thruster",
    ],
    "sci.med": [
        "doctor", "disease", "patient", "medical", "surgery", "cancer",
        "therapy", "symptoms", "diagnosis", "treatment", "blood", "infection",
        "clinical", "dosage", "physician", "chronic", "syndrome", "hospital",
        "vaccine", "allergy", "skin", "pain", "medication", "nurse", "tumor",
    ],
    "sci.electronics": [
        "circuit", "voltage", "battery", "amplifier", "resistor", "capacitor",
        "signal", "transistor", "wiring", "motorola", "soldering", "oscillator",
        "diode", "amp", "frequency", "analog", "microcontroller", "breadboard",
        "relay", "inductor", "schematic", "wattage", "ohm", "chip", "volt",
    ],
    "sci.crypt": [
        "encryption", "clipper", "cipher", "crypto", "nsa", "algorithm",
        "security", "privacy", "decrypt", "escrow", "wiretap", "plaintext",
        "ciphertext", "backdoor", "hash", "protocol", "secure", "cryptosystem",
        "secrecy", "keyspace", "des", "rsa", "cryptanalysis", "keys", "modem",
    ],
}

BACKGROUND_WORDS = [
    "really", "think", "know", "want", "going", "time", "good", "way",
    "people", "make", "just", "don't", "doesn't", "new", "work", "need",
    "things", "right", "point", "question", "problem", "years", "better",
    "actually", "probably", "said", "getting", "trying", "looking", "read",
    "post", "group", "thanks", "advance", "help", "idea", "used", "asked",
    "different", "longer", "little", "great", "wrong", "sure", "come",
]

NAMES = ["pat", "chris", "sam", "alex", "jordan", "taylor", "morgan", "casey"]


def _zipf_weights(n: int, exponent: float = 0.9) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


def write_synthetic_corpus(
    root: Path,
    n_train: int = 150,
    n_test: int = 80,
    seed: int = 7,
    confusion: float = 0.20,
    doc_len: tuple[int, int] = (35, 75),
    messy: bool = True,
) -> Path:
    """4-class corpus with planted per-class vocabulary, newsgroup-style noise.

    Topic words are Zipf-weighted so each class has a few dominant terms
    (mirroring how one term tends to dominate a real newsgroup class), and
    every document carries a couple of rare filler words so the vocabulary
    is much larger than the planted lists.
    """
    rng = np.random.default_rng(seed)
    classes = sorted(CLASS_WORDS)
    zipf = {label: _zipf_weights(len(CLASS_WORDS[label])) for label in classes}
    for split, count in (("train", n_train), ("test", n_test)):
        for label in classes:
            directory = root / split / label
            directory.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                words = []
                n_words = int(rng.integers(doc_len[0], doc_len[1]))
                topic = CLASS_WORDS[label]
                for _ in range(n_words):
                    u = rng.random()
                    if u < 0.52:
                        words.append(BACKGROUND_WORDS[rng.integers(len(BACKGROUND_WORDS))])
                    elif u < 0.52 + confusion:
                        other = classes[rng.integers(len(classes))]
                        words.append(CLASS_WORDS[other][rng.integers(len(CLASS_WORDS[other]))])
                    else:
                        words.append(topic[rng.choice(len(topic), p=zipf[label])])
                for _ in range(int(rng.integers(2, 6))):
                    words.append(f"misc{rng.integers(0, 4000):04d}")
                body_lines = [" ".join(words[j : j + 9]) for j in range(0, len(words), 9)]

                parts = []
                if messy:
                    sender = NAMES[rng.integers(len(NAMES))]
                    parts += [
                        f"From: {sender}@example.com",
                        f"Subject: {words[0]} {words[1]}",
                        f"Lines: {len(body_lines)}",
                        "",
                    ]
                    if rng.random() < 0.3:
                        parts.append(f"{NAMES[rng.integers(len(NAMES))]} writes:")
                        parts.append(f"> {body_lines[0]}")
                parts += body_lines
                if messy and rng.random() < 0.5:
                    parts += ["--", NAMES[rng.integers(len(NAMES))], "somewhere university"]
                (directory / f"{split}{i:04d}.txt").write_text("\n".join(parts) + "\n", "utf-8")
    return root


def write_tiny_corpus(root: Path, docs_per_class: int = 10, seed: int = 3) -> Path:
    """Cleanly separable 4-class corpus (flat layout, no metadata noise)."""
    rng = np.random.default_rng(seed)
    for label in sorted(CLASS_WORDS):
        directory = root / label
        directory.mkdir(parents=True, exist_ok=True)
        for i in range(docs_per_class):
            topic = CLASS_WORDS[label]
            words = [topic[rng.integers(len(topic))] for _ in range(30)]
            words += [BACKGROUND_WORDS[rng.integers(len(BACKGROUND_WORDS))] for _ in range(10)]
            (directory / f"doc{i:03d}.txt").write_text(" ".join(words) + "\n", "utf-8")
    return root


def planted_dnf(rng: np.random.Generator, n_features: int = 8, n_terms: int = 2, max_len: int = 2):
    """Random DNF over {-1,0,1} features whose positive rate stays below 1/2."""
    while True:
        terms = []
        for _ in range(n_terms):
            size = int(rng.integers(1, max_len + 1))
            feats = rng.choice(n_features, size=size, replace=False)
            values = rng.integers(-1, 2, size=size)
            terms.append(tuple((int(f), int(v)) for f, v in zip(feats, values)))
        rate = _dnf_rate(terms, n_features, rng)
        if 0.08 <= rate < 0.48:
            return terms


def _dnf_rate(terms, n_features, rng) -> float:
    sample = rng.integers(-1, 2, size=(4000, n_features))
    return float(dnf_label(terms, sample).mean())


def dnf_label(terms, X: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[0], dtype=bool)
    for term in terms:
        hit = np.ones(X.shape[0], dtype=bool)
        for f, v in term:
            hit &= X[:, f] == v
        out |= hit
    return out


def planted_dnf_dataset(seed: int, n_instances: int = 400, n_features: int = 8, noise: float = 0.0):
    """(X, y, terms) with X uniform over {-1,0,1} and y labeled by a planted DNF."""
    rng = np.random.default_rng(seed)
    terms = planted_dnf(rng, n_features=n_features)
    while True:
        X = rng.integers(-1, 2, size=(n_instances, n_features)).astype(np.int8)
        y = dnf_label(terms, X)
        if 0 < y.sum() < n_instances / 2:
            break
    if noise > 0:
        flip = rng.random(n_instances) < noise
        y = y ^ flip
    return X, y.astype(int), terms


def random_network(rng: np.random.Generator, n_in: int = 20, hidden=(16, 16), n_out: int = 4, scale: float = 1.0) -> FeedForwardClassifier:
    """Untrained network with random weights, ready for gradient checks."""
    net = FeedForwardClassifier(hidden_units=hidden)
    sizes = [n_in, *hidden, n_out]
    net.classes_ = np.arange(n_out)
    net.n_features_in_ = n_in
    net.weights_ = [
        rng.normal(0.0, scale * np.sqrt(2.0 / sizes[i]), size=(sizes[i], sizes[i + 1]))
        for i in range(3)
    ]
    net.biases_ = [rng.normal(0.0, 0.1, size=sizes[i + 1]) for i in range(3)]
    return net


def finite_difference_gradient(net: FeedForwardClassifier, x: np.ndarray, output: int, h: float = 1e-5) -> np.ndarray:
    """Central-difference d p[output] / d x, the independent gradient oracle."""
    grad = np.empty_like(x, dtype=np.float64)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        grad[k] = (net.predict_proba(xp)[0, output] - net.predict_proba(xm)[0, output]) / (2 * h)
    return grad


def away_from_kinks(net: FeedForwardClassifier, x: np.ndarray, tol: float = 1e-6) -> bool:
    """True when no hidden pre-activation sits within tol of a ReLU kink."""
    z1 = x @ net.weights_[0] + net.biases_[0]
    a1 = np.maximum(z1, 0)
    z2 = a1 @ net.weights_[1] + net.biases_[1]
    return bool(np.abs(z1).min() > tol and np.abs(z2).min() > tol)


@pytest.fixture(scope="session")
def sci_corpus(tmp_path_factory) -> Path:
    """The 4-class corpus under test: user-supplied when GRADRULES_CORPUS is set,
    otherwise a generated stand-in with the same layout."""
    env = os.environ.get("GRADRULES_CORPUS")
    if env:
        return Path(env)
    root = tmp_path_factory.mktemp("sci-corpus")
    return write_synthetic_corpus(root)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> Path:
    return write_tiny_corpus(tmp_path_factory.mktemp("tiny-corpus"))
