#!/usr/bin/env python3
"""Independent counting oracle for the Task A dictionary baseline.

For every annotated event of the corpus, count lexicon mentions per
foundation over the 4-sentence window (title, previous, target, next
sentence) and keep the top three foundations by count, ties in canonical
order.

usage: dictionary_oracle.py CORPUS LEXICON OUT
"""

import json
import re
import sys

MORALITIES = ["Care", "Harm", "Fairness", "Cheating", "Loyalty", "Betrayal",
              "Authority", "Subversion", "Sanctity", "Degradation"]
FOUNDATIONS = ["Care/Harm", "Fairness/Cheating", "Loyalty/Betrayal",
               "Authority/Subversion", "Sanctity/Degradation"]


def foundation_of(morality):
    return FOUNDATIONS[MORALITIES.index(morality) // 2]


def read_lexicon(path):
    exact, prefixes = {}, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, labels = line.split("\t")
            fs = {foundation_of(m.strip()) for m in re.split(r"[,;]", labels) if m.strip()}
            word = word.lower()
            if word.endswith("*"):
                prefixes.append((word[:-1], fs))
            else:
                exact.setdefault(word, fs)
    return exact, prefixes


def stems(word):
    out = []
    if word.endswith("ies") or word.endswith("ied"):
        out.append(word[:-3] + "y")
    for suf in ("ing", "ed"):
        if word.endswith(suf) and len(word) - len(suf) >= 2:
            s = word[: -len(suf)]
            out += [s, s + "e"]
            if len(s) >= 2 and s[-1] == s[-2] and s[-1] not in "aeiou":
                out.append(s[:-1])
    if word.endswith("es"):
        out.append(word[:-2])
    if word.endswith("s") and not word.endswith("ss"):
        out.append(word[:-1])
    return out


def lookup(token, exact, prefixes):
    w = token.lower()
    if w in exact:
        return exact[w]
    for s in stems(w):
        if s in exact:
            return exact[s]
    hits = [p for p in prefixes if w.startswith(p[0])]
    if hits:
        return max(hits, key=lambda p: len(p[0]))[1]
    return None


def words(text):
    return re.findall(r"\w+(?:[-']\w+)*|[^\w\s]", text)


def main(corpus, lexicon, out):
    exact, prefixes = read_lexicon(lexicon)
    rows = []
    with open(corpus, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            art = json.loads(line)
            sents = art["sentences"]
            for k, ev in enumerate(art["events"]):
                i = ev["sentence_index"]
                window = words(art["title"]) + [t for j in (i - 1, i, i + 1)
                                                 if 0 <= j < len(sents) for t in sents[j]]
                counts = dict.fromkeys(FOUNDATIONS, 0)
                for t in window:
                    if not re.search(r"\w", t):
                        continue
                    for fnd in lookup(t, exact, prefixes) or ():
                        counts[fnd] += 1
                ranked = sorted((f for f in FOUNDATIONS if counts[f] > 0),
                                key=lambda f: (-counts[f], FOUNDATIONS.index(f)))
                rows.append({"id": f"{art['id']}:{i}:e{k}", "foundations": ranked[:3],
                             "counts": [counts[f] for f in FOUNDATIONS]})
    with open(out, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main(*sys.argv[1:4])
