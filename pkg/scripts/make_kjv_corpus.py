"""Regenerate the bundled corpus from the npm ``kjv`` package (public domain text).

    npm pack kjv
    python scripts/make_kjv_corpus.py kjv-1.0.0.tgz src/phraselm/data/kjv.txt

Verses are split into clauses at ``. ; : ? !``, punctuation is split off as
separate tokens, and clauses longer than ``--max-len`` tokens are dropped.
"""
import argparse
import json
import re
import tarfile

CLAUSE_END = re.compile(r"(?<=[.;:?!])\s+")
TOKEN = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)*|[.,;:?!()'-]")


def clauses(verse):
    verse = verse.replace("#", " ").replace("[", "").replace("]", "")
    for piece in CLAUSE_END.split(verse.strip()):
        tokens = TOKEN.findall(piece)
        if tokens:
            yield tokens


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("tarball")
    ap.add_argument("out")
    ap.add_argument("--max-len", type=int, default=15)
    ap.add_argument("--tokens", type=int, default=60000, help="stop after this many tokens")
    args = ap.parse_args()

    with tarfile.open(args.tarball) as tar:
        verses = json.load(tar.extractfile("package/json/verses-1769.json"))

    total = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as out:
        for verse in verses.values():
            for tokens in clauses(verse):
                if len(tokens) > args.max_len:
                    continue
                out.write(" ".join(tokens) + "\n")
                total += len(tokens)
            if total >= args.tokens:
                break
    print(f"wrote {total} tokens to {args.out}")


if __name__ == "__main__":
    main()
