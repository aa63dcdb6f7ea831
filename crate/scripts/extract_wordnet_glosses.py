#!/usr/bin/env python3
"""Extract gloss lines from a WordNet 3.x `dict/` directory.

Each synset's gloss field (definition plus usage examples) becomes one raw
line of English text. No cleaning is done here; `cryptogram ingest` applies
the vocabulary filter, casing and punctuation repair.

    python3 scripts/extract_wordnet_glosses.py path/to/dict > data/corpus/wordnet_glosses.txt
"""

import sys
from pathlib import Path

MAX_RAW_LEN = 400


def main() -> None:
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    root = Path(sys.argv[1])
    for name in ("data.noun", "data.verb", "data.adj", "data.adv"):
        with open(root / name, encoding="latin-1") as fh:
            for line in fh:
                if line.startswith("  ") or "|" not in line:
                    continue
                gloss = line.split("|", 1)[1].strip()
                if gloss and len(gloss) <= MAX_RAW_LEN:
                    print(gloss)


if __name__ == "__main__":
    main()
