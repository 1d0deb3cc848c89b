#!/usr/bin/env python3
"""Generate the synthetic toy fixtures under data/toy/.

Everything is drawn from a fixed seed, so rerunning reproduces the files
byte for byte.
"""
import json
import random
from datetime import date, timedelta
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "toy"
SCHEMA = "moralevents/v1"

# lexicon word -> (moralities, surface forms used in generated text)
LEXICON = [
    ("protect", ["Care"], ["protected", "protects"]),
    ("rescue", ["Care"], ["rescued"]),
    ("help", ["Care"], ["helped"]),
    ("attack", ["Harm"], ["attacked"]),
    ("injur*", ["Harm"], ["injured"]),
    ("threaten", ["Harm"], ["threatened"]),
    ("fair", ["Fairness"], ["fair"]),
    ("equal", ["Fairness"], ["equal"]),
    ("justice", ["Fairness"], ["justice"]),
    ("cheat", ["Cheating"], ["cheated"]),
    ("rig", ["Cheating"], ["rigged"]),
    ("defraud", ["Cheating"], ["defrauded"]),
    ("loyal", ["Loyalty"], ["loyal"]),
    ("unite", ["Loyalty"], ["united"]),
    ("solidarity", ["Loyalty"], ["solidarity"]),
    ("betray", ["Betrayal"], ["betrayed"]),
    ("abandon", ["Betrayal"], ["abandoned"]),
    ("desert", ["Betrayal"], ["deserted"]),
    ("obey", ["Authority"], ["obeyed"]),
    ("enforce", ["Authority"], ["enforced"]),
    ("order", ["Authority"], ["ordered"]),
    ("defy", ["Subversion"], ["defied"]),
    ("protest", ["Subversion"], ["protested"]),
    ("rebel", ["Subversion"], ["rebelled"]),
    ("sacred", ["Sanctity"], ["sacred"]),
    ("bless", ["Sanctity"], ["blessed"]),
    ("pure", ["Sanctity"], ["pure"]),
    ("desecrat*", ["Degradation"], ["desecrated"]),
    ("pollut*", ["Degradation"], ["polluted"]),
    ("corrupt", ["Degradation", "Cheating"], ["corrupted"]),
]

VERBS = [w for w, _, _ in LEXICON if w not in ("fair", "equal", "justice", "loyal", "solidarity", "sacred", "pure")]

PEOPLE = [
    ("Alvarez", "Person", "L"), ("Brennan", "Person", "R"), ("Chen", "Person", "L"),
    ("Okafor", "Person", "R"), ("Lindqvist", "Person", "L"), ("Moreau", "Person", "R"),
    ("Haddad", "Person", "L"), ("Novak", "Person", "R"),
]
GROUPS = [
    ("Harbor Union", "Organization", None), ("Riverside Council", "Organization", None),
    ("Valley Farmers", "Other", None), ("Northland", "GeoPolitical", None),
    ("Tenant League", "Organization", None), ("Coastal Board", "Organization", None),
]
TOPICS = ["budget", "wages", "water", "housing", "schools", "roads", "taxes", "transit"]
PLACES = ["capital", "harbor", "valley", "district", "city", "county"]
OUTLETS = [("Daily Ledger", "Left"), ("Morning Post", "Center"), ("National Review Wire", "Right")]
NEUTRAL = [
    "the meeting lasted for several hours on {day} .",
    "officials will publish a report about the {topic} next month .",
    "the vote on the {topic} is scheduled for {day} .",
    "reporters gathered outside the hall in the {place} .",
]
DAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"]


def surface(word):
    for w, _, forms in LEXICON:
        if w == word:
            return forms[0]
    raise KeyError(word)


def moralities(word):
    for w, ms, _ in LEXICON:
        if w == word:
            return ms
    raise KeyError(word)


def entity(e):
    name, typ, side = e
    d = {"canonical_name": name, "entity_type": typ}
    if side:
        d["ideology"] = "Left" if side == "L" else "Right"
    return d


def words(e):
    return e[0].split()


def event_sentence(rng, agent, patient, verb, status):
    """Tokens, trigger index and span of one event sentence."""
    head = words(agent)
    if status == "Intentional":
        head = head + ["plans", "to"]
        form = verb.rstrip("*")
        form = {"rig": "rig", "injur": "injure", "desecrat": "desecrate", "pollut": "pollute"}.get(form, form)
    elif status == "Speculative":
        head = ["critics", "say"] + head + ["may", "have"]
        form = surface(verb)
    else:
        form = surface(verb)
    tail = ["over", "the", rng.choice(TOPICS)]
    article = [] if patient[1] == "Person" else ["the"]
    toks = head + [form] + article + words(patient) + tail + ["."]
    trig = len(head)
    start = toks.index(words(agent)[0])
    return toks, trig, [start, len(toks) - 1]


def corpus(rng):
    articles = []
    dates = (
        [date(2021, 2, 1) + timedelta(days=21 * i) for i in range(14)]
        + [date(2022, 2, 1) + timedelta(days=30 * i) for i in range(3)]
        + [date(2022, 8, 1) + timedelta(days=30 * i) for i in range(3)]
    )
    verbs = VERBS[:]
    rng.shuffle(verbs)
    vi = 0
    for d in range(20):
        outlet, ideology = OUTLETS[d % 3]
        agent = PEOPLE[d % len(PEOPLE)]
        patient = GROUPS[(d * 5) % len(GROUPS)]
        agent2 = GROUPS[(d * 5 + 1) % len(GROUPS)]
        patient2 = PEOPLE[(d + 3) % len(PEOPLE)]
        topic = rng.choice(TOPICS)
        sentences, events = [], []
        v1 = verbs[vi % len(verbs)]
        vi += 1
        status = "Actual" if d % 5 else ("Intentional" if d % 10 == 0 else "Speculative")
        toks, trig, span = event_sentence(rng, agent, patient, v1, status)
        sentences.append(toks)
        ms = sorted(set(moralities(v1)))
        events.append({"sentence_index": 0, "agents": [entity(agent)], "patients": [entity(patient)],
                       "event_span": span, "trigger": trig, "moralities": ms, "status": status})
        sentences.append(rng.choice(NEUTRAL).format(day=rng.choice(DAYS), topic=topic, place=rng.choice(PLACES)).split())
        if d % 2 == 0:
            v2 = verbs[vi % len(verbs)]
            vi += 1
            toks, trig, span = event_sentence(rng, agent2, patient2, v2, "Actual")
            sentences.append(toks)
            events.append({"sentence_index": 2, "agents": [entity(agent2)], "patients": [entity(patient2)],
                           "event_span": span, "trigger": trig, "moralities": sorted(set(moralities(v2))),
                           "status": "Actual"})
        else:
            adj = rng.choice(["fair", "equal", "sacred", "pure", "loyal"])
            sentences.append(["supporters", "called", "the", "plan", adj, "and", "necessary", "."])
        title = f"{agent[0]} and {patient[0]} clash over {topic}"
        articles.append({
            "schema": SCHEMA,
            "id": f"toy-{d:02d}",
            "title": title,
            "sentences": sentences,
            "outlet": outlet,
            "outlet_ideology": ideology,
            "publish_date": dates[d].isoformat(),
            "story_id": f"story-{d // 2:02d}",
            "events": events,
        })
    return articles


def morality_bank(rng):
    out = []
    nouns = ["villagers", "officers", "teachers", "neighbors", "volunteers", "guards"]
    for i, (word, _, forms) in enumerate(LEXICON):
        for j in range(3):
            form = forms[j % len(forms)]
            n1, n2 = rng.sample(nouns, 2)
            toks = ["the", n1, form, "the", n2, "in", "the", rng.choice(PLACES), "."]
            mentions = [{"start": 2, "end": 3, "entry_word": word}]
            if j == 2:
                other_word, _, other_forms = LEXICON[(i + 7) % len(LEXICON)]
                toks = toks[:-1] + ["and", "then", other_forms[0], "them", "."]
                mentions.append({"start": len(toks) - 3, "end": len(toks) - 2, "entry_word": other_word})
            out.append({"id": f"mb-{i:02d}-{j}", "tokens": toks, "mentions": mentions, "seed_mention": 0})
    return out


def scenarios():
    good = ["helping a neighbor carry groceries", "donating blood at the clinic", "returning a lost wallet",
            "volunteering at the shelter", "teaching a child to read", "visiting a sick friend",
            "sharing food with the hungry", "rescuing a cat from a tree", "protecting a friend from bullies",
            "keeping a promise to your family", "enjoying your life with your family", "thanking the bus driver",
            "paying workers a fair wage", "telling the truth in court", "cleaning up a public park",
            "comforting a crying stranger", "standing up for a classmate", "caring for an elderly parent",
            "reporting a gas leak", "planting trees in the city"]
    wrong = ["stealing from a charity", "lying to your partner", "cheating on an exam", "kicking a stray dog",
             "betraying a close friend", "rigging a local election", "polluting the river", "bullying a coworker",
             "ignoring a drowning child", "spreading false rumors", "defrauding elderly customers",
             "vandalizing a church", "abandoning a pet on the road", "threatening a neighbor",
             "taking a bribe at work", "insulting a grieving widow", "breaking a promise for money",
             "selling fake medicine", "attacking a peaceful protester", "mocking a disabled person"]
    amoral = ["eating cereal for breakfast", "taking the bus to work", "reading a novel at night",
              "painting a wall blue", "walking in the park", "buying new shoes", "watching a movie",
              "cooking pasta for dinner", "listening to the radio", "sleeping late on sunday",
              "drinking a cup of tea", "wearing a red shirt", "playing cards with friends",
              "washing the car", "ordering a pizza", "checking the weather", "riding a bicycle",
              "folding the laundry", "writing a grocery list", "sitting on a bench"]
    rows = [(s, "morally good") for s in good] + [(s, "morally wrong") for s in wrong] + [(s, "amoral") for s in amoral]
    return [{"scenario": s, "label": l} for s, l in rows]


def main():
    rng = random.Random(20240607)
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "lexicon.tsv", "w") as f:
        f.write("# toy morality lexicon: word<TAB>moralities\n")
        for w, ms, _ in LEXICON:
            f.write(f"{w}\t{','.join(ms)}\n")
    arts = corpus(rng)
    with open(OUT / "corpus.jsonl", "w") as f:
        for a in arts:
            f.write(json.dumps(a) + "\n")
    with open(OUT / "morality_bank.jsonl", "w") as f:
        for s in morality_bank(rng):
            f.write(json.dumps(s) + "\n")
    with open(OUT / "delphi_judgement.jsonl", "w") as f:
        for p in scenarios():
            f.write(json.dumps(p) + "\n")
    with open(OUT / "entity_ideology.tsv", "w") as f:
        f.write("# entity<TAB>L|R\n")
        for name, _, side in PEOPLE:
            f.write(f"{name}\t{side}\n")


if __name__ == "__main__":
    main()
