"""Regenerate the golden outputs for the toy pipeline (run from any directory)."""

import shutil
from pathlib import Path

from xrlinear.cli import main

HERE = Path(__file__).parent
OUT = HERE / "golden"


def run():
    if OUT.exists():
        shutil.rmtree(OUT)
    OUT.mkdir()
    steps = [
        ["vectorize", str(HERE / "train.txt"), "-o", str(OUT / "train.svm"),
         "--save-vectorizer", str(OUT / "vectorizer.tsv"), "--n-labels", "20"],
        ["vectorize", str(HERE / "test.txt"), "-o", str(OUT / "test.svm"),
         "--vectorizer", str(OUT / "vectorizer.tsv"), "--n-labels", "20"],
        ["train", str(OUT / "train.svm"), "-o", str(OUT / "model"), "--chain", str(HERE / "chain"),
         "--vectorizer", str(OUT / "vectorizer.tsv"), "--seed", "0", "--threads", "1"],
        ["predict", str(OUT / "model"), str(OUT / "test.svm"), "-o", str(OUT / "pred.txt"), "--threads", "1"],
        ["eval", str(OUT / "pred.txt"), str(OUT / "test.svm"), "--json", str(OUT / "eval.json")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


if __name__ == "__main__":
    run()
