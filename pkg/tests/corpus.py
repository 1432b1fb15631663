"""Generated LaTeX manuscripts with ground-truth macro positions.

Positions are recorded while the text is being written, independently of the
scanner under test.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

PROSE = [
    "The source was observed in three epochs.",
    "We fit an absorbed power law",
    "with $N_H = 3\\times10^{21}$ cm$^{-2}$",
    "as described by \\citet{smith05}.",
    "Fluxes are listed in Table~\\ref{tab:flux}.",
    "A 50\\% duty cycle is assumed",
    "see \\S2 and \\\\ the appendix",
    "\\textbf{Note:} counts are background subtracted.",
    "$\\{a, b\\}$ are free parameters",
]
DECOYS = [
    "% \\dataset{ADS/MAST#commented.out}",
    "%\\dataset{ADS/CXC#also/commented}",
    "\\datasets{ADS/MAST#not.this.macro}",
    "\\mydataset{ADS/MAST#nor.this}",
]
FACILITIES = ["Sa.CXO", "HST", "iras", "2MASS", "wmap", "spitzer", "galex", "rxte"]


@dataclass
class Manuscript:
    name: str
    text: str
    expected: list[tuple[str, int, int]]  # identifier, line, column


class _Writer:
    def __init__(self):
        self.parts: list[str] = []
        self.line = 1
        self.col = 1

    def write(self, s: str) -> None:
        self.parts.append(s)
        for ch in s:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1

    def text(self) -> str:
        return "".join(self.parts)


def random_identifier(rng: random.Random) -> str:
    facility = rng.choice(FACILITIES)
    style = rng.randrange(3)
    if style == 0:
        private = f"obs/{rng.randrange(10000)}"
    elif style == 1:
        private = f"{facility.lower()}.{rng.randrange(100000):05d}"
    else:
        private = "".join(rng.choice("ABCdef0123456789_-:") for _ in range(rng.randint(1, 12)))
    return f"ADS/{facility}#{private}"


def make_manuscript(rng: random.Random, name: str) -> Manuscript:
    w = _Writer()
    expected = []
    w.write("\\documentclass{aastex}\n\\begin{document}\n")
    for _ in range(rng.randint(3, 25)):
        roll = rng.random()
        if roll < 0.35:
            ident = random_identifier(rng)
            expected.append((ident, w.line, w.col))
            sep = rng.choice(["", " ", "\n  "])
            if rng.random() < 0.2 and "#" in ident:
                # argument wrapped across lines at the separator
                head, tail = ident.split("#", 1)
                w.write(f"\\dataset{sep}{{{head}#\n    {tail}}}")
            else:
                w.write(f"\\dataset{sep}{{{ident}}}")
        elif roll < 0.5:
            w.write(rng.choice(DECOYS))
            w.write("\n")
            continue
        else:
            w.write(rng.choice(PROSE))
        w.write(rng.choice([" ", "\n", "\n\n", "~"]))
    w.write("\n\\end{document}\n")
    return Manuscript(name, w.text(), expected)


def make_corpus(seed: int = 30, files: int = 30) -> list[Manuscript]:
    rng = random.Random(seed)
    return [make_manuscript(rng, f"ms{n:02d}.tex") for n in range(files)]
